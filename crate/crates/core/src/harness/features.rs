//! Binary feature cache.
//!
//! Layout, all integers little-endian:
//! `b"RFSFEAT\0"`, `u32` format version, `u32` dimension, `u32` entry count, then per entry
//! `u32` path length, UTF-8 path, 32-byte SHA-256 of the image content, `dimension` × `f64`.

use crate::error::{Error, Result};
use crate::image::{read_image, GrayImage};
use crate::manipulation::ManipulationKind;
use crate::ml_attack::LabeledFeatures;
use crate::spam::extract_spam;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &[u8; 8] = b"RFSFEAT\0";
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntry {
    pub path: String,
    pub image_hash: [u8; 32],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureCache {
    pub dim: usize,
    pub entries: Vec<FeatureEntry>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl FeatureCache {
    pub fn new(dim: usize) -> Self {
        FeatureCache {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: FeatureEntry) -> Result<()> {
        crate::error::check_dim(self.dim, entry.values.len())?;
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.values.clone()).collect()
    }

    pub fn get(&self, path: &str) -> Option<&FeatureEntry> {
        self.entries.iter().find(|e| e.path == path)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.entries.len() * (40 + 8 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.path.len() as u32).to_le_bytes());
            out.extend_from_slice(e.path.as_bytes());
            out.extend_from_slice(&e.image_hash);
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: "not a feature cache".into(),
            });
        }
        let version = r.u32()?;
        if version != CACHE_FORMAT_VERSION {
            return Err(Error::Parse {
                offset: 8,
                message: format!("unsupported cache version {version}"),
            });
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let at = r.pos;
            let path = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Parse {
                    offset: at,
                    message: "path is not UTF-8".into(),
                })?
                .to_string();
            let image_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
            let values = r
                .take(8 * dim)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push(FeatureEntry {
                path,
                image_hash,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                message: "trailing bytes".into(),
            });
        }
        Ok(FeatureCache { dim, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::manifest::write_file(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }

    /// One row per entry: path, image hash, then the feature values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,sha256");
        for i in 0..self.dim {
            let _ = write!(s, ",f{i}");
        }
        s.push('\n');
        for e in &self.entries {
            s.push_str(&e.path);
            s.push(',');
            s.push_str(&hex::encode(e.image_hash));
            for v in &e.values {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// SPAM features of `images`, reusing entries of `previous` whose path and
/// image content hash both match. Returns the cache and how many entries were reused.
pub fn extract_cached(
    images: &[(String, GrayImage)],
    previous: Option<&FeatureCache>,
) -> Result<(FeatureCache, usize)> {
    let old: HashMap<(&str, [u8; 32]), &FeatureEntry> = previous
        .map(|c| {
            c.entries
                .iter()
                .map(|e| ((e.path.as_str(), e.image_hash), e))
                .collect()
        })
        .unwrap_or_default();
    let built: Vec<(FeatureEntry, bool)> = images
        .par_iter()
        .map(|(path, img)| {
            let image_hash = img.content_hash();
            if let Some(e) = old.get(&(path.as_str(), image_hash)) {
                return Ok(((*e).clone(), true));
            }
            let values = extract_spam(img)
                .map_err(|e| e.context(path.clone()))?
                .into_vec();
            Ok((
                FeatureEntry {
                    path: path.clone(),
                    image_hash,
                    values,
                },
                false,
            ))
        })
        .collect::<Result<_>>()?;
    let reused = built.iter().filter(|(_, r)| *r).count();
    let mut cache = FeatureCache::new(crate::spam::SPAM_DIM);
    for (e, _) in built {
        cache.push(e)?;
    }
    Ok((cache, reused))
}

/// Reads image files and extracts their features, reusing `previous` where valid.
/// Entry paths are the given paths as strings.
pub fn extract_files(
    paths: &[impl AsRef<Path> + Sync],
    previous: Option<&FeatureCache>,
) -> Result<(FeatureCache, usize)> {
    let images: Vec<(String, GrayImage)> = paths
        .par_iter()
        .map(|p| {
            let p = p.as_ref();
            Ok((p.to_string_lossy().into_owned(), read_image(p)?))
        })
        .collect::<Result<_>>()?;
    extract_cached(&images, previous)
}

/// Splits a cache into originals and `kind`-manipulated vectors by path:
/// entries with a directory component `original` are originals, entries
/// with a component equal to the manipulation label are manipulated, and
/// everything else is ignored.
pub fn labeled_from_cache(cache: &FeatureCache, kind: ManipulationKind) -> Result<LabeledFeatures> {
    let mut out = LabeledFeatures::default();
    for e in &cache.entries {
        let parts: Vec<&str> = e.path.split(['/', '\\']).collect();
        let dirs = &parts[..parts.len().saturating_sub(1)];
        if dirs.contains(&"original") {
            out.originals.push(e.values.clone());
        } else if dirs.contains(&kind.label()) {
            out.manipulated.push(e.values.clone());
        }
    }
    if out.originals.is_empty() || out.manipulated.is_empty() {
        return Err(Error::param(format!(
            "cache needs entries under both an `original` and a `{kind}` directory ({} and {} found)",
            out.originals.len(),
            out.manipulated.len()
        )));
    }
    Ok(out)
}

/// Checks a cache entry against its image; stale entries are an error.
pub fn verify_entry(entry: &FeatureEntry, image: &GrayImage) -> Result<()> {
    if entry.image_hash != image.content_hash() {
        return Err(Error::CacheInvalid(entry.path.clone()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u8) -> GrayImage {
        GrayImage::from_fn(16, 12, |r, c| {
            (r as u8 * 13 + c as u8 * 7).wrapping_mul(seed)
        })
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let (cache, reused) =
            extract_cached(&[("a".into(), img(3)), ("b".into(), img(5))], None).unwrap();
        assert_eq!(reused, 0);
        let back = FeatureCache::from_bytes(&cache.to_bytes()).unwrap();
        assert_eq!(back, cache);
        let bytes = cache.to_bytes();
        assert!(FeatureCache::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FeatureCache::from_bytes(b"garbage!").is_err());
    }

    #[test]
    fn reuse_is_keyed_by_content() {
        let (first, _) =
            extract_cached(&[("a".into(), img(3)), ("b".into(), img(5))], None).unwrap();
        let (second, reused) =
            extract_cached(&[("a".into(), img(3)), ("b".into(), img(7))], Some(&first)).unwrap();
        assert_eq!(reused, 1);
        assert_eq!(second.entries[0], first.entries[0]);
        assert_eq!(
            second.entries[1].values,
            extract_spam(&img(7)).unwrap().into_vec()
        );
        assert!(verify_entry(&first.entries[1], &img(7)).is_err());
        verify_entry(&second.entries[1], &img(7)).unwrap();
    }

    #[test]
    fn labels_come_from_directories() {
        let (mut cache, _) = extract_cached(
            &[
                ("d/original/train/a.pgm".into(), img(3)),
                ("d/mf3/train/a.pgm".into(), img(5)),
                ("d/ahe/train/a.pgm".into(), img(7)),
            ],
            None,
        )
        .unwrap();
        let l = labeled_from_cache(&cache, ManipulationKind::Mf3).unwrap();
        assert_eq!((l.originals.len(), l.manipulated.len()), (1, 1));
        assert_eq!(l.manipulated[0], cache.entries[1].values);
        cache.entries.remove(0);
        assert!(labeled_from_cache(&cache, ManipulationKind::Mf3).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (cache, _) = extract_cached(&[("a".into(), img(3))], None).unwrap();
        let csv = cache.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 2 + crate::spam::SPAM_DIM);
        assert_eq!(lines[1].split(',').count(), 2 + crate::spam::SPAM_DIM);
    }
}
