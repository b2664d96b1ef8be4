//! Brightness-temperature cubes, the ash-RGB false-color composite and the
//! standardized multi-channel model input.
//!
//! Ash RGB stretches three quantities linearly into `[0, 1]`:
//!
//! | beam  | quantity        | window (K)  | gamma |
//! |-------|-----------------|-------------|-------|
//! | red   | BT15 − BT14     | −4 … +2     | 1     |
//! | green | BT14 − BT11     | −4 … +5     | 1     |
//! | blue  | BT14            | 243 … 303   | 1     |
//!
//! ABI channel 11 is ~8.4 µm, 14 is ~11.2 µm and 15 is ~12.3 µm.

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::scalar::Real;

/// Physical plausibility gate for brightness temperatures, Kelvin.
pub const BT_MIN_K: f64 = 150.0;
pub const BT_MAX_K: f64 = 350.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FalseColorError {
    #[error("ABI channel {0} is outside 8..=16")]
    InvalidBand(u8),
    #[error("band {0} missing from cube")]
    MissingBand(u8),
    #[error("band {0} listed twice")]
    DuplicateBand(u8),
    #[error("frame {frame} out of range (cube has {frames})")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("calibration window requires lo < hi and gamma > 0 (got {lo}, {hi}, {gamma})")]
    InvalidWindow { lo: f64, hi: f64, gamma: f64 },
    #[error("brightness temperature {value} K at flat index {index} outside [150, 350] K")]
    NonPhysical { value: f64, index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("channel {0} has non-positive spread")]
    NonPositiveSpread(usize),
    #[error("cannot crop {in_h}x{in_w} to {out_h}x{out_w}")]
    CropTooLarge {
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    },
    #[error("png export: {0}")]
    Png(String),
}

/// GOES-16 ABI infrared channel, 8..=16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BandId(u8);

impl BandId {
    /// ~8.4 µm
    pub const IR_8_4: BandId = BandId(11);
    /// ~10.3 µm, taken as the "10 µm" input channel
    pub const IR_10_3: BandId = BandId(13);
    /// ~11.2 µm
    pub const IR_11_2: BandId = BandId(14);
    /// ~12.3 µm
    pub const IR_12_3: BandId = BandId(15);

    pub fn new(channel: u8) -> Result<Self, FalseColorError> {
        if (8..=16).contains(&channel) {
            Ok(Self(channel))
        } else {
            Err(FalseColorError::InvalidBand(channel))
        }
    }

    pub fn channel(self) -> u8 {
        self.0
    }

    /// Nominal central wavelength in micrometres.
    pub fn wavelength_um(self) -> f64 {
        match self.0 {
            8 => 6.19,
            9 => 6.93,
            10 => 7.34,
            11 => 8.44,
            12 => 9.61,
            13 => 10.33,
            14 => 11.21,
            15 => 12.29,
            16 => 13.28,
            _ => unreachable!("BandId is validated on construction"),
        }
    }

    pub fn all() -> impl Iterator<Item = BandId> {
        (8..=16).map(BandId)
    }
}

impl std::fmt::Display for BandId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "band_{:02}", self.0)
    }
}

/// Brightness temperatures indexed `(frame, band, row, col)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCube<T> {
    frames: usize,
    bands: Vec<BandId>,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Real> BandCube<T> {
    /// Validates extents and the physical range of every value.
    pub fn new(
        frames: usize,
        bands: Vec<BandId>,
        height: usize,
        width: usize,
        values: Vec<T>,
    ) -> Result<Self, FalseColorError> {
        let expected = frames * bands.len() * height * width;
        if values.len() != expected {
            return Err(FalseColorError::DimensionMismatch(format!(
                "{frames} frames x {} bands x {height}x{width} needs {expected} values, got {}",
                bands.len(),
                values.len()
            )));
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].contains(b) {
                return Err(FalseColorError::DuplicateBand(b.0));
            }
        }
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| {
            let v = v.as_f64();
            !(v.is_finite() && (BT_MIN_K..=BT_MAX_K).contains(&v))
        }) {
            return Err(FalseColorError::NonPhysical {
                value: v.as_f64(),
                index,
            });
        }
        Ok(Self {
            frames,
            bands,
            height,
            width,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bands(&self) -> &[BandId] {
        &self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn band_index(&self, band: BandId) -> Result<usize, FalseColorError> {
        self.bands
            .iter()
            .position(|&b| b == band)
            .ok_or(FalseColorError::MissingBand(band.0))
    }

    fn check_frame(&self, frame: usize) -> Result<(), FalseColorError> {
        if frame < self.frames {
            Ok(())
        } else {
            Err(FalseColorError::FrameOutOfRange {
                frame,
                frames: self.frames,
            })
        }
    }

    /// The `height × width` plane of one band at one frame.
    pub fn plane(&self, frame: usize, band: BandId) -> Result<&[T], FalseColorError> {
        self.check_frame(frame)?;
        let b = self.band_index(band)?;
        let hw = self.height * self.width;
        let start = (frame * self.bands.len() + b) * hw;
        Ok(&self.values[start..start + hw])
    }

    pub fn center_crop(&self, out_h: usize, out_w: usize) -> Result<Self, FalseColorError> {
        let hw = self.height * self.width;
        let mut values = Vec::with_capacity(self.frames * self.bands.len() * out_h * out_w);
        for plane in self.values.chunks(hw.max(1)) {
            values.extend(center_crop_plane(plane, self.height, self.width, out_h, out_w)?);
        }
        Ok(Self {
            frames: self.frames,
            bands: self.bands.clone(),
            height: out_h,
            width: out_w,
            values,
        })
    }
}

/// Linear stretch window `[lo, hi]` with gamma exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationWindow<T> {
    lo: T,
    hi: T,
    gamma: T,
}

impl<T: Real> CalibrationWindow<T> {
    pub fn new(lo: T, hi: T, gamma: T) -> Result<Self, FalseColorError> {
        if lo < hi && gamma > T::zero() && gamma.is_finite() {
            Ok(Self { lo, hi, gamma })
        } else {
            Err(FalseColorError::InvalidWindow {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
                gamma: gamma.as_f64(),
            })
        }
    }

    fn fixed(lo: f64, hi: f64) -> Self {
        Self {
            lo: T::of(lo),
            hi: T::of(hi),
            gamma: T::one(),
        }
    }

    /// Red beam: BT15 − BT14 over −4 … +2 K.
    pub fn ash_red() -> Self {
        Self::fixed(-4.0, 2.0)
    }

    /// Green beam: BT14 − BT11 over −4 … +5 K.
    pub fn ash_green() -> Self {
        Self::fixed(-4.0, 5.0)
    }

    /// Blue beam: BT14 over 243 … 303 K.
    pub fn ash_blue() -> Self {
        Self::fixed(243.0, 303.0)
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

/// `clamp((x − lo)/(hi − lo), 0, 1)^(1/gamma)`
pub fn normalize_range<T: Real>(x: T, window: &CalibrationWindow<T>) -> T {
    let t = ((x - window.lo) / (window.hi - window.lo))
        .max(T::zero())
        .min(T::one());
    if window.gamma == T::one() {
        t
    } else {
        t.powf(T::one() / window.gamma)
    }
}

/// False-color image, `height × width × 3` interleaved, components in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AshImage<T> {
    height: usize,
    width: usize,
    rgb: Vec<T>,
}

impl<T: Real> AshImage<T> {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rgb(&self) -> &[T] {
        &self.rgb
    }

    pub fn pixel(&self, row: usize, col: usize) -> [T; 3] {
        let i = (row * self.width + col) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Rec. 601 luma of a pixel.
    pub fn luminance(&self, row: usize, col: usize) -> T {
        let [r, g, b] = self.pixel(row, col);
        T::of(0.299) * r + T::of(0.587) * g + T::of(0.114) * b
    }

    /// 8-bit RGB bytes, each component `round(v·255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, FalseColorError> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or_else(|| FalseColorError::Png("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| FalseColorError::Png(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), FalseColorError> {
        std::fs::write(path, self.to_png_bytes()?).map_err(|e| FalseColorError::Png(e.to_string()))
    }

    pub fn center_crop(&self, out_h: usize, out_w: usize) -> Result<Self, FalseColorError> {
        let (top, left) = crop_offsets(self.height, self.width, out_h, out_w)?;
        let mut rgb = Vec::with_capacity(out_h * out_w * 3);
        for r in top..top + out_h {
            let start = (r * self.width + left) * 3;
            rgb.extend_from_slice(&self.rgb[start..start + out_w * 3]);
        }
        Ok(Self {
            height: out_h,
            width: out_w,
            rgb,
        })
    }
}

/// Ash-RGB composite of one frame. Each pixel maps independently.
pub fn ash_rgb<T: Real>(cube: &BandCube<T>, frame: usize) -> Result<AshImage<T>, FalseColorError> {
    let bt11 = cube.plane(frame, BandId::IR_8_4)?;
    let bt14 = cube.plane(frame, BandId::IR_11_2)?;
    let bt15 = cube.plane(frame, BandId::IR_12_3)?;
    let (red, green, blue) = (
        CalibrationWindow::ash_red(),
        CalibrationWindow::ash_green(),
        CalibrationWindow::ash_blue(),
    );
    let mut rgb = Vec::with_capacity(bt14.len() * 3);
    for ((&b11, &b14), &b15) in bt11.iter().zip(bt14).zip(bt15) {
        rgb.push(normalize_range(b15 - b14, &red));
        rgb.push(normalize_range(b14 - b11, &green));
        rgb.push(normalize_range(b14, &blue));
    }
    Ok(AshImage {
        height: cube.height,
        width: cube.width,
        rgb,
    })
}

/// One model input channel: a band, or the difference of two bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSpec {
    Band(BandId),
    /// first − second
    Difference(BandId, BandId),
}

impl ChannelSpec {
    pub fn bands(self) -> Vec<BandId> {
        match self {
            ChannelSpec::Band(b) => vec![b],
            ChannelSpec::Difference(a, b) => vec![a, b],
        }
    }

    /// Text form: `"14"` or `"15-14"`.
    pub fn parse(text: &str) -> Result<Self, FalseColorError> {
        let band = |s: &str| {
            s.trim()
                .parse::<u8>()
                .map_err(|_| FalseColorError::InvalidBand(0))
                .and_then(BandId::new)
        };
        match text.split_once('-') {
            Some((a, b)) => Ok(ChannelSpec::Difference(band(a)?, band(b)?)),
            None => Ok(ChannelSpec::Band(band(text)?)),
        }
    }
}

impl std::fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelSpec::Band(b) => write!(f, "{}", b.0),
            ChannelSpec::Difference(a, b) => write!(f, "{}-{}", a.0, b.0),
        }
    }
}

/// Default input channels: BT at ~8.4, ~10.3, ~11.2 and ~12.3 µm, then
/// BT12.3 − BT11.2 and BT11.2 − BT8.4.
pub fn default_model_channels() -> Vec<ChannelSpec> {
    vec![
        ChannelSpec::Band(BandId::IR_8_4),
        ChannelSpec::Band(BandId::IR_10_3),
        ChannelSpec::Band(BandId::IR_11_2),
        ChannelSpec::Band(BandId::IR_12_3),
        ChannelSpec::Difference(BandId::IR_12_3, BandId::IR_11_2),
        ChannelSpec::Difference(BandId::IR_11_2, BandId::IR_8_4),
    ]
}

/// Per-channel `(mean, spread)` used for standardization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub spread: f64,
}

/// What [`compute_channel_stats`] stores as the spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpreadMode {
    #[default]
    StdDev,
    /// Divide by the raw variance.
    Variance,
}

pub fn channel_plane<T: Real>(
    cube: &BandCube<T>,
    frame: usize,
    spec: ChannelSpec,
) -> Result<Vec<T>, FalseColorError> {
    match spec {
        ChannelSpec::Band(b) => Ok(cube.plane(frame, b)?.to_vec()),
        ChannelSpec::Difference(a, b) => {
            let (pa, pb) = (cube.plane(frame, a)?, cube.plane(frame, b)?);
            Ok(pa.iter().zip(pb).map(|(&x, &y)| x - y).collect())
        }
    }
}

/// Global per-channel statistics over every pixel of the given frames.
pub fn compute_channel_stats<T: Real>(
    scenes: &[(&BandCube<T>, usize)],
    channels: &[ChannelSpec],
    mode: SpreadMode,
) -> Result<Vec<ChannelStats>, FalseColorError> {
    let mut stats = Vec::with_capacity(channels.len());
    for (ci, &spec) in channels.iter().enumerate() {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        let mut planes = Vec::with_capacity(scenes.len());
        for &(cube, frame) in scenes {
            let p = channel_plane(cube, frame, spec)?;
            n += p.len();
            sum += p.iter().map(|v| v.as_f64()).sum::<f64>();
            planes.push(p);
        }
        if n == 0 {
            return Err(FalseColorError::NonPositiveSpread(ci));
        }
        let mean = sum / n as f64;
        for p in &planes {
            sq += p.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
        }
        let var = sq / n as f64;
        let spread = match mode {
            SpreadMode::StdDev => var.sqrt(),
            SpreadMode::Variance => var,
        };
        if spread <= 0.0 || !spread.is_finite() {
            return Err(FalseColorError::NonPositiveSpread(ci));
        }
        stats.push(ChannelStats { mean, spread });
    }
    Ok(stats)
}

/// Stack the configured channels of one frame as `[C, H, W]`, each
/// standardized as `(x − mean) / spread`.
pub fn model_input_stack<T: Real>(
    cube: &BandCube<T>,
    frame: usize,
    channels: &[ChannelSpec],
    stats: &[ChannelStats],
) -> Result<Tensor<T>, FalseColorError> {
    if stats.len() != channels.len() {
        return Err(FalseColorError::DimensionMismatch(format!(
            "{} channels but {} stats",
            channels.len(),
            stats.len()
        )));
    }
    if let Some(ci) = stats.iter().position(|s| s.spread.is_nan() || s.spread <= 0.0) {
        return Err(FalseColorError::NonPositiveSpread(ci));
    }
    let hw = cube.height * cube.width;
    let mut data = Vec::with_capacity(channels.len() * hw);
    for (&spec, st) in channels.iter().zip(stats) {
        let (mean, spread) = (T::of(st.mean), T::of(st.spread));
        data.extend(
            channel_plane(cube, frame, spec)?
                .into_iter()
                .map(|x| (x - mean) / spread),
        );
    }
    Tensor::new(vec![channels.len(), cube.height, cube.width], data)
        .map_err(|e| FalseColorError::DimensionMismatch(e.to_string()))
}

/// Leading `(row, col)` offsets of a centered crop: `floor((in − out)/2)`.
pub fn crop_offsets(
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<(usize, usize), FalseColorError> {
    if out_h > in_h || out_w > in_w {
        return Err(FalseColorError::CropTooLarge {
            in_h,
            in_w,
            out_h,
            out_w,
        });
    }
    Ok(((in_h - out_h) / 2, (in_w - out_w) / 2))
}

/// Centered crop of a row-major `h × w` plane.
pub fn center_crop_plane<E: Copy>(
    plane: &[E],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Vec<E>, FalseColorError> {
    let (top, left) = crop_offsets(h, w, out_h, out_w)?;
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in top..top + out_h {
        out.extend_from_slice(&plane[r * w + left..r * w + left + out_w]);
    }
    Ok(out)
}
