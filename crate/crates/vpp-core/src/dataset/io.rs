//! Corpus directory layout: PNG scenes under `images/` beside an
//! `index.jsonl` of unified records whose `image` fields are paths relative
//! to the index.

use std::path::{Path, PathBuf};

use crate::raster::{read_png, write_png, Raster};
use crate::{Error, Result};

use super::{read_unified, write_unified, Sample};

/// Writes scenes and the index; returns the index path.
pub fn write_corpus(dir: &Path, pairs: &[(Raster, Sample)]) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut samples = Vec::with_capacity(pairs.len());
    for (i, (img, sample)) in pairs.iter().enumerate() {
        let rel = format!("images/{i:06}.png");
        write_png(img, &dir.join(&rel))?;
        let mut s = sample.clone();
        s.image_ref = rel;
        samples.push(s);
    }
    let index = dir.join("index.jsonl");
    write_unified(&samples, &index)?;
    Ok(index)
}

/// Loads an index plus its images. Accepts either the index file or its
/// containing directory.
pub fn read_corpus(path: &Path) -> Result<Vec<(Raster, Sample)>> {
    let index = if path.is_dir() {
        path.join("index.jsonl")
    } else {
        path.to_path_buf()
    };
    let base = index
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let samples = read_unified(&index)?;
    samples
        .into_iter()
        .map(|s| {
            let img = read_png(&base.join(&s.image_ref))?;
            Ok((img, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_corpus, SynthSceneSpec};

    #[test]
    fn corpus_roundtrip_through_disk() {
        let spec = SynthSceneSpec::default();
        let pairs = synth_corpus(&spec, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let index = write_corpus(dir.path(), &pairs).unwrap();
        let back = read_corpus(&index).unwrap();
        assert_eq!(back.len(), 4);
        for ((a_img, a), (b_img, b)) in pairs.iter().zip(&back) {
            assert_eq!(a.turns, b.turns);
            assert_eq!(a.boxes, b.boxes);
            // PNG quantizes to 8 bits.
            for (x, y) in a_img.data.iter().zip(&b_img.data) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-9);
            }
        }
    }
}
