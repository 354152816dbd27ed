//! On-disk sequences: a directory of `.flo` flows and optional ground-truth masks.
//!
//! ```text
//! flow_0000.flo ... flow_{T-2}.flo     consecutive flows, frame i -> i+1
//! mask_0000.pgm ... mask_{T-1}.pgm     ground truth (optional, one per frame)
//! pairs/flow_{i}_r{r}.flo              wider-baseline flows, frame i -> i+r (optional)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow_io::{read_flo, read_mask_image, write_atomic, write_flo, write_mask_image};
use crate::grid::{BoundaryMask, FlowField};
use crate::sampler::{FramePair, PairFlowSource};
use crate::scalar::Scalar;
use crate::synth::SyntheticSequence;

pub fn flow_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("flow_{i:04}.flo"))
}

pub fn mask_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("mask_{i:04}.pgm"))
}

pub fn pair_path(dir: &Path, i: usize, r: usize) -> PathBuf {
    dir.join("pairs").join(format!("flow_{i:04}_r{r}.flo"))
}

/// Attaches the file name to format errors, which otherwise only carry a byte offset.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        Error::Validation { row, col, message } => Error::Validation {
            row,
            col,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn load_flow<S: Scalar>(path: &Path) -> Result<FlowField<S>> {
    let bytes = fs::read(path)?;
    in_file(path, read_flo(&bytes))?.cast()
}

pub fn load_mask(path: &Path) -> Result<BoundaryMask> {
    let bytes = fs::read(path)?;
    in_file(path, read_mask_image(&bytes))
}

#[derive(Clone, Debug)]
pub struct FlowDataset<S> {
    pub flows: Vec<FlowField<S>>,
    /// Wider-baseline flows keyed by `(i, r)`, `r ≥ 2`.
    pub pairs: BTreeMap<(usize, usize), FlowField<S>>,
    pub masks: Option<Vec<BoundaryMask>>,
}

impl<S: Scalar> FlowDataset<S> {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut flows = Vec::new();
        while flow_path(dir, flows.len()).is_file() {
            flows.push(load_flow(&flow_path(dir, flows.len()))?);
        }
        if flows.is_empty() {
            return Err(Error::domain(format!("no flow_0000.flo in {}", dir.display())));
        }
        let shape = flows[0].shape();
        if let Some(i) = flows.iter().position(|f| f.shape() != shape) {
            return Err(Error::domain(format!("flow {i} has a different size from flow 0")));
        }

        let masks = if mask_path(dir, 0).is_file() {
            let masks = (0..=flows.len())
                .map(|i| load_mask(&mask_path(dir, i)))
                .collect::<Result<Vec<_>>>()?;
            if let Some(i) = masks.iter().position(|m| m.shape() != shape) {
                return Err(Error::domain(format!("mask {i} does not match the flow size")));
            }
            Some(masks)
        } else {
            None
        };

        let mut pairs = BTreeMap::new();
        let pair_dir = dir.join("pairs");
        if pair_dir.is_dir() {
            let mut names: Vec<PathBuf> = fs::read_dir(&pair_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            names.sort();
            for path in names {
                let Some((i, r)) = parse_pair_name(&path) else { continue };
                if r < 2 || i + r > flows.len() {
                    return Err(Error::domain(format!("{} is outside the sequence", path.display())));
                }
                let f: FlowField<S> = load_flow(&path)?;
                if f.shape() != shape {
                    return Err(Error::domain(format!("{} does not match the flow size", path.display())));
                }
                pairs.insert((i, r), f);
            }
        }
        Ok(FlowDataset { flows, pairs, masks })
    }

    /// Largest `r` such that every start frame has an `r`-step flow.
    pub fn max_complete_interval(&self) -> usize {
        let t = self.frame_count();
        (1..t)
            .take_while(|&r| r == 1 || (0..t - r).all(|i| self.pairs.contains_key(&(i, r))))
            .last()
            .unwrap_or(1)
    }
}

fn parse_pair_name(path: &Path) -> Option<(usize, usize)> {
    let stem = path.file_name()?.to_str()?.strip_suffix(".flo")?.strip_prefix("flow_")?;
    let (i, r) = stem.split_once("_r")?;
    Some((i.parse().ok()?, r.parse().ok()?))
}

impl<S: Scalar> PairFlowSource<S> for FlowDataset<S> {
    fn frame_count(&self) -> usize {
        self.flows.len() + 1
    }

    fn pair_flow(&self, pair: FramePair) -> Result<FlowField<S>> {
        let found = if pair.r == 1 {
            self.flows.get(pair.i)
        } else {
            self.pairs.get(&(pair.i, pair.r))
        };
        found
            .cloned()
            .ok_or_else(|| Error::domain(format!("no flow for frames {} -> {}", pair.i, pair.partner())))
    }
}

/// Writes a synthetic sequence: corrupted consecutive flows, ground-truth masks, and
/// `r`-step flows for `2 ≤ r ≤ min(max_r, T−1)`. Returns the written paths in order.
pub fn write_sequence<S: Scalar>(dir: &Path, seq: &SyntheticSequence<S>, max_r: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let t = seq.scene.frames();
    let mut written = Vec::new();
    for i in 0..t - 1 {
        let p = flow_path(dir, i);
        write_atomic(&p, &write_flo(&seq.pair_flow(FramePair { i, r: 1 })?))?;
        written.push(p);
    }
    for (i, m) in seq.masks().iter().enumerate() {
        let p = mask_path(dir, i);
        write_atomic(&p, &write_mask_image(m))?;
        written.push(p);
    }
    let top = max_r.min(t - 1);
    if top >= 2 {
        fs::create_dir_all(dir.join("pairs"))?;
    }
    for r in 2..=top {
        for i in 0..t - r {
            let p = pair_path(dir, i, r);
            write_atomic(&p, &write_flo(&seq.pair_flow(FramePair { i, r })?))?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Flow, Shape};
    use crate::synth::{MotionPattern, ObjectShape, SceneObject, SceneSpec};

    fn sequence(frames: usize) -> SyntheticSequence<f64> {
        let spec = SceneSpec {
            shape: Shape::new(12, 10),
            frames,
            objects: vec![SceneObject {
                shape: ObjectShape::Rectangle,
                position: (2.0, 1.0),
                size: (4, 3),
                velocity: Flow::new(1.0, 0.0),
                motion: MotionPattern::Constant,
            }],
            background_velocity: Flow::new(0.0, -0.5),
            seed: 1,
        };
        SyntheticSequence::new(spec, vec![]).unwrap()
    }

    fn tempdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("flowbound-dataset-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn round_trip_with_pairs() {
        let dir = tempdir("rt");
        let seq = sequence(5);
        let written = write_sequence(&dir, &seq, 3).unwrap();
        assert_eq!(written.len(), 4 + 5 + 3 + 2);
        let ds = FlowDataset::<f64>::load(&dir).unwrap();
        assert_eq!(ds.frame_count(), 5);
        assert_eq!(ds.masks.as_ref().unwrap(), &seq.masks());
        assert_eq!(ds.max_complete_interval(), 3);
        let p = FramePair { i: 1, r: 3 };
        assert_eq!(ds.pair_flow(p).unwrap(), seq.pair_flow(p).unwrap());
        assert!(ds.pair_flow(FramePair { i: 2, r: 3 }).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn two_frames_have_no_pairs_dir() {
        let dir = tempdir("t2");
        let written = write_sequence(&dir, &sequence(2), 3).unwrap();
        assert_eq!(written.len(), 3);
        assert!(!dir.join("pairs").exists());
        let ds = FlowDataset::<f32>::load(&dir).unwrap();
        assert_eq!(ds.max_complete_interval(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bad_file_names_the_path() {
        let dir = tempdir("bad");
        write_sequence(&dir, &sequence(3), 1).unwrap();
        fs::write(flow_path(&dir, 1), b"not a flow file at all").unwrap();
        let err = FlowDataset::<f64>::load(&dir).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        assert!(err.to_string().contains("flow_0001.flo"));
        fs::remove_dir_all(&dir).unwrap();
        assert!(FlowDataset::<f64>::load(&dir).is_err());
    }

    #[test]
    fn pair_names() {
        assert_eq!(parse_pair_name(Path::new("pairs/flow_0003_r2.flo")), Some((3, 2)));
        assert_eq!(parse_pair_name(Path::new("pairs/notes.txt")), None);
    }
}
