//! Synthetic multi-frame scenes with planted contrail streaks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::falsecolor::{BandCube, BandId};
use crate::maskops::{connected_components, BitMask, ComponentTrack, Pixel};
use crate::scalar::Real;

/// Bands written for every synthetic record, in cube order.
pub const SYNTH_BANDS: [BandId; 4] = [BandId::IR_8_4, BandId::IR_10_3, BandId::IR_11_2, BandId::IR_12_3];

/// Tries per streak before the generator gives up on placing it.
const MAX_PLACEMENT_TRIES: usize = 200;
const COARSE_GRID: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub min_contrails: usize,
    pub max_contrails: usize,
    pub min_width_px: f64,
    pub max_width_px: f64,
    pub min_length_px: f64,
    pub max_length_px: f64,
    /// Largest per-frame widening; width never exceeds `max_width_px`.
    pub max_widening_px: f64,
    /// Largest per-frame advection distance.
    pub max_drift_px: f64,
    /// Drop applied to BT 11.2 µm along a fresh streak; the other bands move
    /// proportionally (12.3 µm by 1.25×, 10.3 µm by 0.9×, 8.4 µm by 0.5×).
    pub min_depression_k: f64,
    pub max_depression_k: f64,
    pub background_min_k: f64,
    pub background_max_k: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise_k: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            frames: 4,
            height: 64,
            width: 64,
            min_contrails: 1,
            max_contrails: 3,
            min_width_px: 1.0,
            max_width_px: 3.0,
            min_length_px: 16.0,
            max_length_px: 40.0,
            max_widening_px: 0.5,
            max_drift_px: 1.0,
            min_depression_k: 2.0,
            max_depression_k: 6.0,
            background_min_k: 250.0,
            background_max_k: 290.0,
            noise_k: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::BadSpec(m.to_string()));
        let ranges = [
            ("width", self.min_width_px, self.max_width_px),
            ("length", self.min_length_px, self.max_length_px),
            ("depression", self.min_depression_k, self.max_depression_k),
            ("background", self.background_min_k, self.background_max_k),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(&format!("{name} range [{lo}, {hi}] is empty or non-positive"));
            }
        }
        if self.min_contrails > self.max_contrails || self.max_contrails > u8::MAX as usize {
            return bad("contrail count range must satisfy min <= max <= 255");
        }
        if self.frames < 2 {
            return bad("need at least 2 frames");
        }
        if self.min_width_px < 1.0 {
            return bad("streaks must be at least 1 px wide");
        }
        // Thin enough to stay elongated and long enough to hold 10 pixels
        // at any angle.
        if self.min_length_px < 5.0 * self.max_width_px || self.min_length_px < 16.0 {
            return bad("min_length_px must be >= 16 and >= 5 * max_width_px");
        }
        let travel = self.max_drift_px * (self.frames - 1) as f64;
        let room = self.max_length_px + self.max_width_px + 2.0 * travel + 4.0;
        if room > self.height.min(self.width) as f64 {
            return bad("scene too small for the longest streak and its drift");
        }
        if self.max_widening_px < 0.0 || self.max_drift_px < 0.0 || self.noise_k < 0.0 {
            return bad("widening, drift and noise must be >= 0");
        }
        if self.background_max_k + self.max_width_px > 340.0
            || self.background_min_k - 1.25 * self.max_depression_k - 3.0 - 6.0 * self.noise_k < 160.0
        {
            return bad("temperatures would leave the physical range");
        }
        Ok(())
    }
}

/// One record: its band cube plus per-frame labels and the planted tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBundle<T> {
    pub record_id: String,
    pub cube: BandCube<T>,
    pub frame_masks: Vec<BitMask>,
    pub tracks: Vec<ComponentTrack>,
}

/// Index of the labeled frame of a `frames`-long sequence: the penultimate.
pub fn labeled_frame(frames: usize) -> usize {
    frames.saturating_sub(2)
}

impl<T: Real> RecordBundle<T> {
    pub fn labeled_frame(&self) -> usize {
        labeled_frame(self.cube.frames())
    }

    pub fn label(&self) -> &BitMask {
        &self.frame_masks[self.labeled_frame()]
    }

    /// Per-frame instance ids (0 = background), `[frames][row * width + col]`.
    pub fn instance_maps(&self) -> Vec<Vec<u8>> {
        let (h, w) = (self.cube.height(), self.cube.width());
        let mut maps = vec![vec![0u8; h * w]; self.cube.frames()];
        for (id, track) in self.tracks.iter().enumerate() {
            for (f, px) in track.frames() {
                for &(r, c) in px {
                    maps[*f][r * w + c] = id as u8 + 1;
                }
            }
        }
        maps
    }
}

/// Smooth field in `[lo, hi]`: bilinear interpolation of a coarse random grid.
fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Vec<f64> {
    let g = COARSE_GRID;
    let grid: Vec<f64> = (0..g * g).map(|_| rng.random_range(lo..=hi)).collect();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let y = r as f64 / (h - 1).max(1) as f64 * (g - 1) as f64;
        let (y0, fy) = ((y.floor() as usize).min(g - 2), y - (y.floor()).min((g - 2) as f64));
        for c in 0..w {
            let x = c as f64 / (w - 1).max(1) as f64 * (g - 1) as f64;
            let (x0, fx) = ((x.floor() as usize).min(g - 2), x - (x.floor()).min((g - 2) as f64));
            let at = |rr: usize, cc: usize| grid[rr * g + cc];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Per-frame pixel lists of one streak.
type StreakFrames = Vec<(usize, Vec<Pixel>)>;

#[derive(Debug, Clone)]
struct Streak {
    start: usize,
    center: (f64, f64),
    dir: (f64, f64),
    length: f64,
    width0: f64,
    widening: f64,
    drift: (f64, f64),
    depression: f64,
}

impl Streak {
    fn width_at(&self, age: usize, max_width: f64) -> f64 {
        (self.width0 + self.widening * age as f64).min(max_width)
    }

    /// Rasterized pixels at `frame`, or `None` if the streak would touch the
    /// image border.
    fn pixels(&self, frame: usize, h: usize, w: usize, max_width: f64) -> Option<Vec<Pixel>> {
        let age = frame - self.start;
        let width = self.width_at(age, max_width);
        let cy = self.center.0 + self.drift.0 * age as f64;
        let cx = self.center.1 + self.drift.1 * age as f64;
        let half_len = self.length / 2.0;
        let reach = half_len + width;
        if cy - reach < 1.0 || cx - reach < 1.0 || cy + reach > (h - 2) as f64 || cx + reach > (w - 2) as f64 {
            return None;
        }
        let (r0, r1) = ((cy - reach).floor(), (cy + reach).ceil());
        let (c0, c1) = ((cx - reach).floor(), (cx + reach).ceil());
        let mut px = Vec::new();
        let (r0, c0) = (r0 as usize, c0 as usize);
        let (r1, c1) = ((r1 as usize).min(h - 2), (c1 as usize).min(w - 2));
        for r in r0..=r1 {
            for c in c0..=c1 {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let along = dy * self.dir.0 + dx * self.dir.1;
                let across = -dy * self.dir.1 + dx * self.dir.0;
                if along.abs() <= half_len && across.abs() <= width / 2.0 {
                    px.push((r, c));
                }
            }
        }
        Some(px)
    }
}

fn sample_streak(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Streak {
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let drift_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let drift = rng.random_range(0.0..=spec.max_drift_px);
    Streak {
        start: rng.random_range(0..=spec.frames - 2),
        center: (
            rng.random_range(0.0..spec.height as f64),
            rng.random_range(0.0..spec.width as f64),
        ),
        dir: (angle.sin(), angle.cos()),
        length: rng.random_range(spec.min_length_px..=spec.max_length_px),
        width0: rng.random_range(spec.min_width_px..=spec.max_width_px),
        widening: rng.random_range(0.0..=spec.max_widening_px),
        drift: (drift * drift_angle.sin(), drift * drift_angle.cos()),
        depression: rng.random_range(spec.min_depression_k..=spec.max_depression_k),
    }
}

/// Place a streak whose every frame is one 8-connected piece inside the
/// image and at least one pixel away from every streak placed before.
fn place_streak(
    spec: &SyntheticSceneSpec,
    rng: &mut ChaCha8Rng,
    occupied: &[BitMask],
) -> Option<(Streak, StreakFrames)> {
    let (h, w) = (spec.height, spec.width);
    'tries: for _ in 0..MAX_PLACEMENT_TRIES {
        let s = sample_streak(spec, rng);
        let mut frames = Vec::new();
        for (f, taken) in occupied.iter().enumerate().skip(s.start) {
            let Some(px) = s.pixels(f, h, w, spec.max_width_px) else {
                continue 'tries;
            };
            let touches = px.iter().any(|&(r, c)| {
                (r - 1..=r + 1).any(|rr| (c - 1..=c + 1).any(|cc| taken.get(rr, cc)))
            });
            let single = BitMask::from_pixels(h, w, px.iter().copied())
                .map(|m| connected_components(&m).len() == 1)
                .unwrap_or(false);
            if touches || !single {
                continue 'tries;
            }
            frames.push((f, px));
        }
        return Some((s, frames));
    }
    None
}

fn generate_one<T: Real>(spec: &SyntheticSceneSpec, index: u64) -> Result<RecordBundle<T>, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let (h, w, nf) = (spec.height, spec.width, spec.frames);
    let hw = h * w;

    let bt14 = smooth_field(&mut rng, h, w, spec.background_min_k, spec.background_max_k);
    let d11 = smooth_field(&mut rng, h, w, 0.0, 3.0);
    let d13 = smooth_field(&mut rng, h, w, 0.2, 1.2);
    let d15 = smooth_field(&mut rng, h, w, -1.5, 0.5);

    let count = rng.random_range(spec.min_contrails..=spec.max_contrails);
    let mut occupied = vec![BitMask::new(h, w)?; nf];
    let mut streaks = Vec::new();
    let mut tracks = Vec::new();
    for _ in 0..count {
        let Some((s, frames)) = place_streak(spec, &mut rng, &occupied) else {
            break;
        };
        for (f, px) in &frames {
            for &p in px {
                occupied[*f].set(p.0, p.1, true);
            }
        }
        tracks.push(ComponentTrack::new(h, w, frames.clone())?);
        streaks.push((s, frames));
    }

    // (frame, band, row, col) with bands in SYNTH_BANDS order
    let mut values = vec![0.0f64; nf * 4 * hw];
    let noise = Normal::new(0.0, spec.noise_k.max(f64::MIN_POSITIVE))
        .map_err(|e| PipelineError::BadSpec(e.to_string()))?;
    for f in 0..nf {
        let mut drop = vec![0.0f64; hw];
        for (s, frames) in &streaks {
            if let Some((_, px)) = frames.iter().find(|(ff, _)| *ff == f) {
                let width = s.width_at(f - s.start, spec.max_width_px);
                let d = s.depression * (s.width0 / width).sqrt();
                for &(r, c) in px {
                    drop[r * w + c] = d;
                }
            }
        }
        let base = f * 4 * hw;
        for i in 0..hw {
            let b14 = bt14[i] - drop[i];
            let bands = [
                bt14[i] - d11[i] - 0.5 * drop[i],
                bt14[i] + d13[i] - 0.9 * drop[i],
                b14,
                bt14[i] + d15[i] - 1.25 * drop[i],
            ];
            for (b, v) in bands.into_iter().enumerate() {
                let n = if spec.noise_k > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                values[base + b * hw + i] = v + n;
            }
        }
    }
    let cube = BandCube::new(nf, SYNTH_BANDS.to_vec(), h, w, values.into_iter().map(T::of).collect())?;
    let frame_masks = occupied;
    Ok(RecordBundle {
        record_id: format!("s{}_{:05}", spec.seed, index),
        cube,
        frame_masks,
        tracks,
    })
}

/// Generate `n` records. Record `i` depends only on `(spec, i)`.
pub fn synth_generate<T: Real>(spec: &SyntheticSceneSpec, n: usize) -> Result<Vec<RecordBundle<T>>, PipelineError> {
    spec.validate()?;
    (0..n as u64).map(|i| generate_one(spec, i)).collect()
}
