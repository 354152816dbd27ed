//! Synthetic flow sequences with exact ground truth.
//!
//! Objects translate over a moving background; flow is rendered analytically
//! from their trajectories, so every uncorrupted flow is piecewise constant
//! and its motion boundary is exactly the object silhouette border. Three
//! corruptions model common estimator failures: zero-flow patches, per-pixel
//! direction noise and frames where the object moves with the background.

use std::collections::BTreeSet;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, Flow, FlowField, Grid, PixelCoord, Shape};
use crate::kv::{self, KvFile};
use crate::sampler::{FramePair, PairFlowSource};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Rectangle,
    /// Ellipse inscribed in the object's bounding box.
    Ellipse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPattern {
    Constant,
    /// A fraction of the steps (rounded to the nearest count) have the object
    /// moving with the background; which steps is decided by the scene seed.
    StopAndGo { stationary_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject<S> {
    pub shape: ObjectShape,
    /// Top-left corner of the bounding box at frame 0, as `(row, col)`.
    pub position: (S, S),
    /// Bounding box `(height, width)` in pixels.
    pub size: (usize, usize),
    pub velocity: Flow<S>,
    pub motion: MotionPattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec<S> {
    pub shape: Shape,
    pub frames: usize,
    /// Later objects are drawn on top of earlier ones.
    pub objects: Vec<SceneObject<S>>,
    pub background_velocity: Flow<S>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind<S> {
    /// Zero flow inside a randomly placed `height`×`width` rectangle.
    DarkPatch { height: usize, width: usize },
    /// Every vector is rotated by an independent N(0, σ²) angle.
    AbruptMotion { sigma: S },
    /// The whole frame takes the background velocity.
    StaticFrame { background: Flow<S> },
}

/// A corruption applied to the flows that start at each of `affected_frames`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption<S> {
    pub kind: CorruptionKind<S>,
    pub affected_frames: BTreeSet<usize>,
    pub seed: u64,
}

/// Rendered sequence: `frames − 1` flows and `frames` ground-truth masks.
#[derive(Clone, Debug)]
pub struct Rendered<S> {
    pub flows: Vec<FlowField<S>>,
    pub masks: Vec<BoundaryMask>,
}

/// A validated scene with precomputed object trajectories.
#[derive(Clone, Debug)]
pub struct Scene<S> {
    spec: SceneSpec<S>,
    /// `steps[o][t]`: displacement of object `o` from frame `t` to `t + 1`.
    steps: Vec<Vec<Flow<S>>>,
    /// `positions[o][t]`: top-left corner of object `o` at frame `t`, `(row, col)`.
    positions: Vec<Vec<(S, S)>>,
}

impl<S: Scalar> SceneSpec<S> {
    pub fn compile(&self) -> Result<Scene<S>> {
        Scene::new(self.clone())
    }
}

fn round_index<S: Scalar>(v: S) -> i64 {
    v.as_f64().round() as i64
}

impl<S: Scalar> Scene<S> {
    pub fn new(spec: SceneSpec<S>) -> Result<Self> {
        if spec.shape.height == 0 || spec.shape.width == 0 {
            return Err(Error::spec("height/width", "scene must be at least 1x1"));
        }
        if spec.frames < 2 {
            return Err(Error::spec("frames", "need at least 2 frames"));
        }
        if spec.objects.is_empty() {
            return Err(Error::spec("object", "scene needs at least one object"));
        }
        let bg = spec.background_velocity;
        if !(bg.x.is_finite() && bg.y.is_finite()) {
            return Err(Error::spec("background", "velocity must be finite"));
        }
        let n_steps = spec.frames - 1;
        let mut steps = Vec::with_capacity(spec.objects.len());
        let mut positions = Vec::with_capacity(spec.objects.len());
        for (o, obj) in spec.objects.iter().enumerate() {
            let field = |name: &str| format!("object[{o}].{name}");
            if obj.size.0 == 0 || obj.size.1 == 0 {
                return Err(Error::spec(field("size"), "object size must be positive"));
            }
            if !(obj.velocity.x.is_finite() && obj.velocity.y.is_finite()) {
                return Err(Error::spec(field("velocity"), "velocity must be finite"));
            }
            let stationary = stationary_steps(spec.seed, o, &obj.motion, n_steps)
                .map_err(|e| Error::spec(field("motion"), e.to_string()))?;
            let obj_steps: Vec<Flow<S>> = (0..n_steps)
                .map(|t| if stationary.contains(&t) { bg } else { obj.velocity })
                .collect();
            let mut pos = obj.position;
            let mut track = Vec::with_capacity(spec.frames);
            for t in 0..spec.frames {
                let (r0, c0) = (round_index(pos.0), round_index(pos.1));
                let fits = r0 >= 0
                    && c0 >= 0
                    && r0 + obj.size.0 as i64 <= spec.shape.height as i64
                    && c0 + obj.size.1 as i64 <= spec.shape.width as i64;
                if !fits {
                    return Err(Error::spec(
                        field("position"),
                        format!("object leaves the {} grid at frame {t}", spec.shape),
                    ));
                }
                track.push(pos);
                if t < n_steps {
                    pos = (pos.0 + obj_steps[t].y, pos.1 + obj_steps[t].x);
                }
            }
            steps.push(obj_steps);
            positions.push(track);
        }
        Ok(Scene {
            spec,
            steps,
            positions,
        })
    }

    pub fn spec(&self) -> &SceneSpec<S> {
        &self.spec
    }

    pub fn frames(&self) -> usize {
        self.spec.frames
    }

    /// Steps `t` (flow `t → t+1`) where object `o` moves with the background.
    pub fn stationary_steps(&self, o: usize) -> BTreeSet<usize> {
        let bg = self.spec.background_velocity;
        (0..self.steps[o].len())
            .filter(|&t| self.steps[o][t] == bg)
            .collect()
    }

    fn covers(&self, o: usize, frame: usize, p: PixelCoord) -> bool {
        let obj = &self.spec.objects[o];
        let (top, left) = self.positions[o][frame];
        let (r0, c0) = (round_index(top), round_index(left));
        let (r, c) = (p.row as i64, p.col as i64);
        let (h, w) = (obj.size.0 as i64, obj.size.1 as i64);
        if r < r0 || r >= r0 + h || c < c0 || c >= c0 + w {
            return false;
        }
        match obj.shape {
            ObjectShape::Rectangle => true,
            ObjectShape::Ellipse => {
                let (ry, rx) = (h as f64 / 2.0, w as f64 / 2.0);
                let dy = (r - r0) as f64 + 0.5 - ry;
                let dx = (c - c0) as f64 + 0.5 - rx;
                (dy / ry).powi(2) + (dx / rx).powi(2) <= 1.0
            }
        }
    }

    /// Topmost object covering `p` at `frame`.
    pub fn object_at(&self, frame: usize, p: PixelCoord) -> Option<usize> {
        (0..self.spec.objects.len())
            .rev()
            .find(|&o| self.covers(o, frame, p))
    }

    /// Ground-truth foreground (union of all objects) at `frame`.
    pub fn mask(&self, frame: usize) -> BoundaryMask {
        let data = self
            .spec
            .shape
            .coords()
            .map(|p| self.object_at(frame, p).is_some())
            .collect();
        Grid::from_raw(self.spec.shape, data)
    }

    /// Object-index map at `frame`: `Some(o)` for object pixels.
    pub fn object_map(&self, frame: usize) -> Vec<Option<usize>> {
        self.spec
            .shape
            .coords()
            .map(|p| self.object_at(frame, p))
            .collect()
    }

    /// Exact displacement from frame `from` to frame `to` for every pixel of frame `from`.
    pub fn flow_between(&self, from: usize, to: usize) -> Result<FlowField<S>> {
        if from >= to || to >= self.spec.frames {
            return Err(Error::domain(format!(
                "no flow from frame {from} to frame {to} in a {}-frame scene",
                self.spec.frames
            )));
        }
        let span = S::of((to - from) as f64);
        let bg = self.spec.background_velocity * span;
        let disp: Vec<Flow<S>> = self
            .positions
            .iter()
            .map(|track| Flow::new(track[to].1 - track[from].1, track[to].0 - track[from].0))
            .collect();
        let data = self
            .object_map(from)
            .into_iter()
            .map(|o| o.map_or(bg, |o| disp[o]))
            .collect();
        Grid::new(self.spec.shape, data)
    }

    pub fn render(&self) -> Result<Rendered<S>> {
        let flows = (0..self.spec.frames - 1)
            .map(|t| self.flow_between(t, t + 1))
            .collect::<Result<Vec<_>>>()?;
        let masks = (0..self.spec.frames).map(|t| self.mask(t)).collect();
        Ok(Rendered { flows, masks })
    }
}

/// Deterministic choice of stationary steps for object `o`.
fn stationary_steps(
    scene_seed: u64,
    o: usize,
    motion: &MotionPattern,
    n_steps: usize,
) -> Result<BTreeSet<usize>> {
    match *motion {
        MotionPattern::Constant => Ok(BTreeSet::new()),
        MotionPattern::StopAndGo {
            stationary_fraction: f,
        } => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::config(format!("stationary fraction {f} must lie in [0, 1]")));
            }
            let count = ((f * n_steps as f64).round() as usize).min(n_steps);
            let mut rng = seed::rng(seed::derive_indexed(scene_seed, &[o as u64, 0x5709]));
            Ok(sample_indices(&mut rng, n_steps, count).into_iter().collect())
        }
    }
}

pub fn render_sequence<S: Scalar>(spec: &SceneSpec<S>) -> Result<Rendered<S>> {
    spec.compile()?.render()
}

impl<S: Scalar> Corruption<S> {
    pub fn affects(&self, frame: usize) -> bool {
        self.affected_frames.contains(&frame)
    }

    /// Applies this corruption to the flow starting at `frame`. The random draw depends
    /// only on `(seed, frame)`, so every interval starting at that frame sees the same damage.
    pub fn apply(&self, flow: &FlowField<S>, frame: usize) -> Result<FlowField<S>> {
        if !self.affects(frame) {
            return Ok(flow.clone());
        }
        let mut rng = seed::rng(seed::derive_indexed(self.seed, &[frame as u64]));
        let shape = flow.shape();
        match &self.kind {
            CorruptionKind::DarkPatch { height, width } => {
                let h = (*height).clamp(1, shape.height);
                let w = (*width).clamp(1, shape.width);
                let top = rng.random_range(0..=shape.height - h);
                let left = rng.random_range(0..=shape.width - w);
                Grid::from_fn(shape, |p| {
                    let inside = (top..top + h).contains(&p.row) && (left..left + w).contains(&p.col);
                    if inside {
                        Flow::zero()
                    } else {
                        *flow.get(p).unwrap()
                    }
                })
            }
            CorruptionKind::AbruptMotion { sigma } => {
                if *sigma == S::zero() {
                    return Ok(flow.clone());
                }
                let normal = Normal::new(0.0, sigma.as_f64())
                    .map_err(|e| Error::config(format!("abrupt_motion sigma: {e}")))?;
                flow.map(|v| v.rotated(S::of(normal.sample(&mut rng))))
            }
            CorruptionKind::StaticFrame { background } => Grid::filled(shape, *background),
        }
    }

    fn validate(&self, flow_count: usize) -> Result<()> {
        if let Some(&f) = self.affected_frames.iter().find(|&&f| f >= flow_count) {
            return Err(Error::domain(format!(
                "corruption targets flow {f}, but only {flow_count} flows exist"
            )));
        }
        if let CorruptionKind::AbruptMotion { sigma } = self.kind {
            if !(sigma >= S::zero() && sigma.is_finite()) {
                return Err(Error::config("abrupt_motion sigma must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Applies every corruption that targets `frame`, in list order.
pub fn corrupt_frame<S: Scalar>(
    flow: &FlowField<S>,
    frame: usize,
    corruptions: &[Corruption<S>],
) -> Result<FlowField<S>> {
    let mut out = flow.clone();
    for c in corruptions.iter().filter(|c| c.affects(frame)) {
        out = c.apply(&out, frame)?;
    }
    Ok(out)
}

/// Corrupts a list of consecutive flows; shapes and counts are preserved.
pub fn corrupt<S: Scalar>(
    flows: &[FlowField<S>],
    corruptions: &[Corruption<S>],
) -> Result<Vec<FlowField<S>>> {
    for c in corruptions {
        c.validate(flows.len())?;
    }
    flows
        .iter()
        .enumerate()
        .map(|(t, f)| corrupt_frame(f, t, corruptions))
        .collect()
}

/// A scene plus its corruptions, serving analytic flow for any frame pair.
#[derive(Clone, Debug)]
pub struct SyntheticSequence<S> {
    pub scene: Scene<S>,
    pub corruptions: Vec<Corruption<S>>,
}

impl<S: Scalar> SyntheticSequence<S> {
    pub fn new(spec: SceneSpec<S>, corruptions: Vec<Corruption<S>>) -> Result<Self> {
        let scene = Scene::new(spec)?;
        for c in &corruptions {
            c.validate(scene.frames() - 1)?;
        }
        Ok(SyntheticSequence { scene, corruptions })
    }

    pub fn masks(&self) -> Vec<BoundaryMask> {
        (0..self.scene.frames()).map(|t| self.scene.mask(t)).collect()
    }

    /// Consecutive flows with corruptions applied.
    pub fn flows(&self) -> Result<Vec<FlowField<S>>> {
        (0..self.scene.frames() - 1)
            .map(|t| self.pair_flow(FramePair { i: t, r: 1 }))
            .collect()
    }
}

impl<S: Scalar> PairFlowSource<S> for SyntheticSequence<S> {
    fn frame_count(&self) -> usize {
        self.scene.frames()
    }

    fn pair_flow(&self, pair: FramePair) -> Result<FlowField<S>> {
        let clean = self.scene.flow_between(pair.i, pair.partner())?;
        corrupt_frame(&clean, pair.i, &self.corruptions)
    }
}

// ---------------------------------------------------------------------------
// Scene files
// ---------------------------------------------------------------------------

const SCENE_KEYS: &[&str] = &[
    "height",
    "width",
    "frames",
    "seed",
    "background",
    "object",
    "corruption",
];

fn parse_pair<S: Scalar>(field: &str, text: &str) -> Result<(S, S)> {
    let parts: Vec<f64> = kv::parse_list(field, &text.replace(' ', ","))?;
    match parts.as_slice() {
        [a, b] => Ok((S::of(*a), S::of(*b))),
        _ => Err(Error::spec(field, format!("expected two numbers, got `{text}`"))),
    }
}

fn attr<T: std::str::FromStr>(
    field: &str,
    attrs: &std::collections::BTreeMap<String, String>,
    name: &str,
) -> Result<T> {
    let v = attrs
        .get(name)
        .ok_or_else(|| Error::spec(format!("{field}.{name}"), "missing attribute"))?;
    kv::parse_value(&format!("{field}.{name}"), v)
}

fn parse_object<S: Scalar>(field: &str, text: &str) -> Result<SceneObject<S>> {
    let (kind, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let shape = match kind {
        "rectangle" => ObjectShape::Rectangle,
        "ellipse" => ObjectShape::Ellipse,
        other => return Err(Error::spec(field, format!("unknown object shape `{other}`"))),
    };
    let attrs = kv::parse_attrs(field, rest)?;
    for k in attrs.keys() {
        if !["row", "col", "height", "width", "vx", "vy", "motion"].contains(&k.as_str()) {
            return Err(Error::spec(format!("{field}.{k}"), "unknown attribute"));
        }
    }
    let motion = match attrs.get("motion").map(String::as_str) {
        None | Some("constant") => MotionPattern::Constant,
        Some(m) => match m.strip_prefix("stop_and_go:") {
            Some(f) => MotionPattern::StopAndGo {
                stationary_fraction: kv::parse_value(&format!("{field}.motion"), f)?,
            },
            None => return Err(Error::spec(format!("{field}.motion"), format!("unknown motion `{m}`"))),
        },
    };
    Ok(SceneObject {
        shape,
        position: (S::of(attr(field, &attrs, "row")?), S::of(attr(field, &attrs, "col")?)),
        size: (attr(field, &attrs, "height")?, attr(field, &attrs, "width")?),
        velocity: Flow::new(S::of(attr(field, &attrs, "vx")?), S::of(attr(field, &attrs, "vy")?)),
        motion,
    })
}

fn parse_corruption<S: Scalar>(field: &str, text: &str, background: Flow<S>) -> Result<Corruption<S>> {
    let (kind, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let attrs = kv::parse_attrs(field, rest)?;
    let affected_frames: BTreeSet<usize> = kv::parse_list(
        &format!("{field}.frames"),
        attrs
            .get("frames")
            .ok_or_else(|| Error::spec(format!("{field}.frames"), "missing attribute"))?,
    )?
    .into_iter()
    .collect();
    let seed = match attrs.get("seed") {
        Some(s) => kv::parse_value(&format!("{field}.seed"), s)?,
        None => 0,
    };
    let allowed: &[&str] = match kind {
        "dark_patch" => &["frames", "seed", "height", "width"],
        "abrupt_motion" => &["frames", "seed", "sigma"],
        "static_frame" => &["frames", "seed"],
        other => return Err(Error::spec(field, format!("unknown corruption `{other}`"))),
    };
    if let Some(k) = attrs.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::spec(format!("{field}.{k}"), "unknown attribute"));
    }
    let kind = match kind {
        "dark_patch" => CorruptionKind::DarkPatch {
            height: attr(field, &attrs, "height")?,
            width: attr(field, &attrs, "width")?,
        },
        "abrupt_motion" => CorruptionKind::AbruptMotion {
            sigma: S::of(attr(field, &attrs, "sigma")?),
        },
        _ => CorruptionKind::StaticFrame { background },
    };
    Ok(Corruption {
        kind,
        affected_frames,
        seed,
    })
}

/// Parses a scene file.
///
/// ```text
/// height = 64
/// width = 64
/// frames = 10
/// seed = 7
/// background = 0 1                 # vx vy
/// object = rectangle row=10 col=12 height=16 width=20 vx=2 vy=0 motion=constant
/// object = ellipse row=30 col=30 height=12 width=12 vx=0 vy=-1 motion=stop_and_go:0.5
/// corruption = dark_patch frames=3 height=20 width=20 seed=5
/// corruption = abrupt_motion frames=4,5 sigma=0.6 seed=9
/// corruption = static_frame frames=2
/// ```
///
/// `static_frame` uses the scene background velocity.
pub fn parse_scene<S: Scalar>(text: &str) -> Result<(SceneSpec<S>, Vec<Corruption<S>>)> {
    let file = KvFile::parse(text)?;
    file.check_keys(SCENE_KEYS)?;
    let background = match file.get("background") {
        Some(v) => {
            let (x, y) = parse_pair::<S>("background", v)?;
            Flow::new(x, y)
        }
        None => Flow::zero(),
    };
    let objects = file
        .get_all("object")
        .enumerate()
        .map(|(i, e)| parse_object(&format!("object[{i}]"), &e.value))
        .collect::<Result<Vec<_>>>()?;
    let corruptions = file
        .get_all("corruption")
        .enumerate()
        .map(|(i, e)| parse_corruption(&format!("corruption[{i}]"), &e.value, background))
        .collect::<Result<Vec<_>>>()?;
    let spec = SceneSpec {
        shape: Shape::new(file.require("height")?, file.require("width")?),
        frames: file.require("frames")?,
        objects,
        background_velocity: background,
        seed: file.parse_opt("seed")?.unwrap_or(0),
    };
    Ok((spec, corruptions))
}

// ---------------------------------------------------------------------------
// Random scenes for test suites
// ---------------------------------------------------------------------------

/// Recipe for a random single-object scene with two distinct motions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub shape: Shape,
    pub frames: usize,
    /// Minimum angle between object and background directions, radians.
    pub min_separation: f64,
    /// Use a stop-and-go object with this stationary fraction.
    pub stop_and_go: Option<f64>,
    /// Largest absolute integer velocity component.
    pub max_speed: i32,
    /// Keep the background still instead of drawing a nonzero velocity.
    pub static_background: bool,
    /// Add one dark patch and one abrupt-motion frame.
    pub corrupt: bool,
    pub abrupt_sigma: f64,
}

impl SceneRecipe {
    pub fn clean(shape: Shape, frames: usize) -> Self {
        SceneRecipe {
            shape,
            frames,
            min_separation: std::f64::consts::FRAC_PI_4,
            stop_and_go: None,
            max_speed: 2,
            static_background: false,
            corrupt: false,
            abrupt_sigma: 0.6,
        }
    }

    /// One dark patch, one abrupt-motion frame (σ = 0.6) and a stop-and-go object.
    pub fn corrupted(shape: Shape, frames: usize) -> Self {
        SceneRecipe {
            stop_and_go: Some(0.5),
            corrupt: true,
            ..Self::clean(shape, frames)
        }
    }
}

fn random_velocity<R: Rng>(rng: &mut R, max: i32) -> (i32, i32) {
    loop {
        let v = (rng.random_range(-max..=max), rng.random_range(-max..=max));
        if v != (0, 0) {
            return v;
        }
    }
}

fn separation(a: (i32, i32), b: (i32, i32)) -> f64 {
    let ta = f64::from(a.0).atan2(f64::from(a.1));
    let tb = f64::from(b.0).atan2(f64::from(b.1));
    let d = (ta - tb).abs();
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Draws a scene (and its corruptions) from `recipe`, deterministically in `seed`.
pub fn random_scene<S: Scalar>(recipe: &SceneRecipe, seed: u64) -> Result<SyntheticSequence<S>> {
    let Shape { height, width } = recipe.shape;
    if recipe.frames < 2 || height < 8 || width < 8 {
        return Err(Error::config("random scenes need at least 2 frames and an 8x8 grid"));
    }
    let mut rng = seed::rng(seed::derive(seed, "scene"));
    for _attempt in 0..1000 {
        let bg = if recipe.static_background {
            (0, 0)
        } else {
            random_velocity(&mut rng, 1)
        };
        let v = random_velocity(&mut rng, recipe.max_speed);
        if !recipe.static_background && separation(v, bg) < recipe.min_separation {
            continue;
        }
        let size = (
            rng.random_range(height / 4..=height / 2),
            rng.random_range(width / 4..=width / 2),
        );
        let shape = if rng.random_bool(0.5) {
            ObjectShape::Rectangle
        } else {
            ObjectShape::Ellipse
        };
        let motion = match recipe.stop_and_go {
            Some(f) => MotionPattern::StopAndGo { stationary_fraction: f },
            None => MotionPattern::Constant,
        };
        let spec_seed = rng.random::<u64>();
        let bg_flow = Flow::new(S::of(f64::from(bg.0)), S::of(f64::from(bg.1)));
        let object = SceneObject {
            shape,
            position: (S::zero(), S::zero()),
            size,
            velocity: Flow::new(S::of(f64::from(v.0)), S::of(f64::from(v.1))),
            motion,
        };
        let n_steps = recipe.frames - 1;
        let stationary = stationary_steps(spec_seed, 0, &motion, n_steps)?;
        // Offsets of the top-left corner relative to frame 0.
        let (mut dr, mut dc) = (0i64, 0i64);
        let (mut min_r, mut max_r, mut min_c, mut max_c) = (0i64, 0i64, 0i64, 0i64);
        for t in 0..n_steps {
            let step = if stationary.contains(&t) { bg } else { v };
            dr += i64::from(step.1);
            dc += i64::from(step.0);
            min_r = min_r.min(dr);
            max_r = max_r.max(dr);
            min_c = min_c.min(dc);
            max_c = max_c.max(dc);
        }
        let (lo_r, hi_r) = (-min_r, height as i64 - size.0 as i64 - max_r);
        let (lo_c, hi_c) = (-min_c, width as i64 - size.1 as i64 - max_c);
        if lo_r > hi_r || lo_c > hi_c {
            continue;
        }
        let row = rng.random_range(lo_r..=hi_r);
        let col = rng.random_range(lo_c..=hi_c);
        let spec = SceneSpec {
            shape: recipe.shape,
            frames: recipe.frames,
            objects: vec![SceneObject {
                position: (S::of(row as f64), S::of(col as f64)),
                ..object
            }],
            background_velocity: bg_flow,
            seed: spec_seed,
        };

        let mut corruptions = Vec::new();
        if recipe.corrupt && n_steps >= 2 {
            let picks = sample_indices(&mut rng, n_steps, 2).into_vec();
            corruptions.push(Corruption {
                kind: CorruptionKind::DarkPatch {
                    height: rng.random_range(height / 3..=height / 2),
                    width: rng.random_range(width / 3..=width / 2),
                },
                affected_frames: BTreeSet::from([picks[0]]),
                seed: rng.random(),
            });
            corruptions.push(Corruption {
                kind: CorruptionKind::AbruptMotion {
                    sigma: S::of(recipe.abrupt_sigma),
                },
                affected_frames: BTreeSet::from([picks[1]]),
                seed: rng.random(),
            });
        }
        return SyntheticSequence::new(spec, corruptions);
    }
    Err(Error::config("could not place an object satisfying the recipe"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object(velocity: (f64, f64), motion: MotionPattern, frames: usize) -> SceneSpec<f64> {
        SceneSpec {
            shape: Shape::new(16, 16),
            frames,
            objects: vec![SceneObject {
                shape: ObjectShape::Rectangle,
                position: (2.0, 2.0),
                size: (4, 5),
                velocity: Flow::new(velocity.0, velocity.1),
                motion,
            }],
            background_velocity: Flow::zero(),
            seed: 3,
        }
    }

    #[test]
    fn static_object_gives_zero_flow() {
        let r = render_sequence(&one_object((0.0, 0.0), MotionPattern::Constant, 4)).unwrap();
        assert_eq!(r.flows.len(), 3);
        assert_eq!(r.masks.len(), 4);
        assert!(r.flows.iter().all(|f| f.iter().all(Flow::is_zero)));
        assert!(r.masks.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r.masks[0].count_ones(), 20);
    }

    #[test]
    fn moving_object_flow_is_exact() {
        let r = render_sequence(&one_object((2.0, 0.0), MotionPattern::Constant, 3)).unwrap();
        for (t, f) in r.flows.iter().enumerate() {
            for p in f.shape().coords() {
                let expected = if *r.masks[t].get(p).unwrap() { Flow::new(2.0, 0.0) } else { Flow::zero() };
                assert_eq!(*f.get(p).unwrap(), expected);
            }
        }
        // Mask translates two columns right per frame.
        assert!(r.masks[1].get(PixelCoord::new(2, 4)).copied().unwrap());
        assert!(!r.masks[1].get(PixelCoord::new(2, 3)).copied().unwrap());
    }

    #[test]
    fn stop_and_go_count() {
        let spec = one_object((1.0, 0.0), MotionPattern::StopAndGo { stationary_fraction: 0.5 }, 10);
        let scene = spec.compile().unwrap();
        let r = scene.render().unwrap();
        let still = r
            .flows
            .iter()
            .enumerate()
            .filter(|(t, f)| f.iter().zip(r.masks[*t].iter()).all(|(v, &m)| !m || v.is_zero()))
            .count();
        assert_eq!(still, 5);
        assert_eq!(scene.stationary_steps(0).len(), 5);
    }

    #[test]
    fn leaving_the_grid_is_a_spec_error() {
        let err = render_sequence(&one_object((5.0, 0.0), MotionPattern::Constant, 4)).unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "object[0].position"), "{err}");
    }

    #[test]
    fn multi_step_flow_is_accumulated_displacement() {
        let spec = one_object((1.0, 2.0), MotionPattern::Constant, 4);
        let scene = spec.compile().unwrap();
        let f = scene.flow_between(0, 3).unwrap();
        assert_eq!(*f.get(PixelCoord::new(2, 2)).unwrap(), Flow::new(3.0, 6.0));
        assert_eq!(*f.get(PixelCoord::new(15, 15)).unwrap(), Flow::zero());
        assert!(scene.flow_between(2, 2).is_err());
    }

    #[test]
    fn later_objects_occlude_earlier_ones() {
        let mut spec = one_object((1.0, 0.0), MotionPattern::Constant, 2);
        let mut top = spec.objects[0].clone();
        top.velocity = Flow::new(0.0, 1.0);
        spec.objects.push(top);
        let f = render_sequence(&spec).unwrap().flows.remove(0);
        assert_eq!(*f.get(PixelCoord::new(3, 3)).unwrap(), Flow::new(0.0, 1.0));
    }

    #[test]
    fn corruption_basics() {
        let r = render_sequence(&one_object((1.0, 0.0), MotionPattern::Constant, 4)).unwrap();
        assert_eq!(corrupt(&r.flows, &[]).unwrap(), r.flows);

        let whole = Corruption {
            kind: CorruptionKind::DarkPatch { height: 16, width: 16 },
            affected_frames: BTreeSet::from([1]),
            seed: 1,
        };
        let out = corrupt(&r.flows, &[whole]).unwrap();
        assert!(out[1].iter().all(Flow::is_zero));
        assert_eq!(out[0], r.flows[0]);

        let calm = Corruption {
            kind: CorruptionKind::AbruptMotion { sigma: 0.0 },
            affected_frames: BTreeSet::from([0, 1, 2]),
            seed: 1,
        };
        assert_eq!(corrupt(&r.flows, &[calm]).unwrap(), r.flows);

        let noisy = Corruption {
            kind: CorruptionKind::AbruptMotion { sigma: 0.6 },
            affected_frames: BTreeSet::from([2]),
            seed: 4,
        };
        let out = corrupt(&r.flows, std::slice::from_ref(&noisy)).unwrap();
        assert_ne!(out[2], r.flows[2]);
        assert_eq!(out, corrupt(&r.flows, &[noisy]).unwrap());
        // Rotation keeps magnitudes.
        for (a, b) in out[2].iter().zip(r.flows[2].iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }

        let stat = Corruption {
            kind: CorruptionKind::StaticFrame { background: Flow::new(0.5, 0.5) },
            affected_frames: BTreeSet::from([0]),
            seed: 0,
        };
        assert!(corrupt(&r.flows, std::slice::from_ref(&stat)).unwrap()[0].iter().all(|v| *v == Flow::new(0.5, 0.5)));

        let out_of_range = Corruption { affected_frames: BTreeSet::from([3]), ..stat };
        assert!(corrupt(&r.flows, &[out_of_range]).is_err());
    }

    #[test]
    fn scene_file_round_trip() {
        let text = "\
height = 20
width = 24
frames = 5
seed = 11
background = 0 1
object = rectangle row=2 col=3 height=5 width=6 vx=2 vy=0
object = ellipse row=10 col=10 height=6 width=6 vx=-1 vy=0 motion=stop_and_go:0.5
corruption = dark_patch frames=1 height=4 width=4 seed=2
corruption = static_frame frames=0,2
";
        let (spec, corruptions) = parse_scene::<f64>(text).unwrap();
        assert_eq!(spec.shape, Shape::new(20, 24));
        assert_eq!(spec.objects.len(), 2);
        assert_eq!(spec.objects[1].motion, MotionPattern::StopAndGo { stationary_fraction: 0.5 });
        assert_eq!(corruptions.len(), 2);
        assert_eq!(corruptions[1].kind, CorruptionKind::StaticFrame { background: Flow::new(0.0, 1.0) });
        assert!(SyntheticSequence::new(spec, corruptions).is_ok());
    }

    #[test]
    fn scene_file_errors_name_the_field() {
        let err = parse_scene::<f64>("height = 8\nwidth = 8\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "frames"));
        let err = parse_scene::<f64>("height = 8\nwidth = 8\nframes = 2\nobject = blob row=1\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "object[0]"));
        let err = parse_scene::<f64>("height = 8\nwidth = 8\nframes = 2\nobject = rectangle row=1 col=1 height=2 width=2 vx=1\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "object[0].vy"));
        let err = parse_scene::<f64>("colour = red\n").unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "colour"));
    }

    #[test]
    fn random_scenes_are_deterministic_and_separated() {
        let recipe = SceneRecipe::corrupted(Shape::new(32, 32), 12);
        for seed in 0..20 {
            let a = random_scene::<f64>(&recipe, seed).unwrap();
            let b = random_scene::<f64>(&recipe, seed).unwrap();
            assert_eq!(a.flows().unwrap(), b.flows().unwrap());
            assert_eq!(a.corruptions.len(), 2);
            let obj = &a.scene.spec().objects[0];
            let bg = a.scene.spec().background_velocity;
            let sep = separation((obj.velocity.x as i32, obj.velocity.y as i32), (bg.x as i32, bg.y as i32));
            assert!(sep >= std::f64::consts::FRAC_PI_4 - 1e-12);
        }
    }
}
