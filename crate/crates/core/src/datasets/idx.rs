//! IDX parsing (the MNIST file format). Headers are big-endian: a magic
//! word, then one `u32` per dimension, then raw unsigned bytes.

use alloc::format;
use alloc::vec::Vec;

use super::{LabeledDataset, Recipe};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            message: format!("truncated header: needed 4 bytes at offset {offset}"),
        })
}

fn body<'a>(bytes: &'a [u8], header: usize, dims: &[u32]) -> Result<&'a [u8]> {
    let expected = dims.iter().map(|&d| d as usize).product::<usize>();
    let have = bytes.len() - header;
    if have < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated data: expected {expected} bytes, found {have}"),
        });
    }
    if have > expected {
        return Err(Error::Parse {
            offset: header + expected,
            message: format!("{} trailing bytes after data", have - expected),
        });
    }
    Ok(&bytes[header..])
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != want {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic 0x{found:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let dims = [read_u32(bytes, 4)?, read_u32(bytes, 8)?, read_u32(bytes, 12)?];
    let pixels = body(bytes, 16, &dims)?.to_vec();
    Ok(IdxImages {
        count: dims[0] as usize,
        rows: dims[1] as usize,
        cols: dims[2] as usize,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)?;
    Ok(body(bytes, 8, &[count])?.to_vec())
}

/// Flattens images to rows scaled by 1/255, keeps `keep_classes` and
/// relabels them `0..k` in ascending original order.
pub fn idx_dataset(images: &IdxImages, labels: &[u8], keep_classes: &[usize], name: &str) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if images.count == 0 || images.rows * images.cols == 0 {
        return Err(Error::Data("IDX file holds no pixels".into()));
    }
    let mut keep: Vec<usize> = keep_classes.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let dim = images.rows * images.cols;
    let mut data = Vec::new();
    let mut ys = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let Some(new) = keep.iter().position(|&c| c == usize::from(label)) else {
            continue;
        };
        data.extend(
            images.pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&p| f64::from(p) / 255.0),
        );
        ys.push(new);
    }
    if ys.is_empty() {
        return Err(Error::Data(format!("no samples of classes {keep:?}")));
    }
    let keep_desc = keep
        .iter()
        .map(alloc::string::ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    let recipe = Recipe::new("idx")
        .with("rows", images.rows)
        .with("cols", images.cols)
        .with("keep_classes", keep_desc);
    LabeledDataset::new(
        Tensor::new(alloc::vec![ys.len(), dim], data)?,
        ys,
        keep.len(),
        name,
        recipe,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn images_fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 1, 0, 0, 0, 2];
        b.extend([0, 255, 255, 0, 51, 102, 7, 8]);
        b
    }

    fn labels_fixture() -> Vec<u8> {
        vec![0, 0, 8, 1, 0, 0, 0, 4, 1, 7, 0, 3]
    }

    #[test]
    fn parses_hand_built_fixture() {
        let images = parse_idx_images(&images_fixture()).unwrap();
        assert_eq!((images.count, images.rows, images.cols), (4, 1, 2));
        let labels = parse_idx_labels(&labels_fixture()).unwrap();
        assert_eq!(labels, vec![1, 7, 0, 3]);
        let d = idx_dataset(&images, &labels, &[0, 1], "fixture").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.features().row(0), &[0.0, 1.0]);
        assert_eq!(d.features().row(1), &[0.2, 0.4]);
        let d = idx_dataset(&images, &labels, &[7, 3], "fixture").unwrap();
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn reports_found_magic() {
        let mut b = images_fixture();
        b[3] = 1;
        let err = parse_idx_images(&b).unwrap_err();
        assert!(alloc::format!("{err}").contains("0x00000801"), "{err}");
        assert!(parse_idx_labels(&images_fixture()).is_err());
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let b = images_fixture();
        assert!(matches!(parse_idx_images(&b[..b.len() - 1]), Err(Error::Parse { .. })));
        assert!(matches!(parse_idx_images(&b[..10]), Err(Error::Parse { .. })));
        let images = parse_idx_images(&b).unwrap();
        assert!(matches!(
            idx_dataset(&images, &[0, 1, 2], &[0, 1], "x"),
            Err(Error::Data(_))
        ));
    }
}
