use clap::Parser;

fn main() {
    let cli = dbat::cli::Cli::parse();
    let code = match dbat::cli::dispatch(cli, dbat::cli::seed_from_env()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
