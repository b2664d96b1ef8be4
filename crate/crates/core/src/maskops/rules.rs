//! Four-rule validity check for labeled contrails:
//!
//! 1. at least 10 pixels;
//! 2. at some point at least 3 times longer than wide;
//! 3. appears suddenly or enters from the image sides;
//! 4. visible in at least two frames.

use super::{elongation, BitMask, MaskError, Pixel};

/// Pixel sets of one candidate contrail across the frames where it appears.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrack {
    height: usize,
    width: usize,
    frames: Vec<(usize, Vec<Pixel>)>,
}

impl ComponentTrack {
    pub fn new(
        height: usize,
        width: usize,
        frames: Vec<(usize, Vec<Pixel>)>,
    ) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::EmptyDimensions(height, width));
        }
        let increasing = frames.windows(2).all(|w| w[0].0 < w[1].0);
        if !increasing || frames.iter().any(|(_, px)| px.is_empty()) {
            return Err(MaskError::MalformedTrack);
        }
        if let Some(&(r, c)) = frames
            .iter()
            .flat_map(|(_, px)| px)
            .find(|&&(r, c)| r >= height || c >= width)
        {
            return Err(MaskError::OutOfBounds(r, c));
        }
        Ok(Self {
            height,
            width,
            frames,
        })
    }

    pub fn frames(&self) -> &[(usize, Vec<Pixel>)] {
        &self.frames
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.frames.first().map(|(f, _)| *f)
    }

    fn touches_border(&self, pixels: &[Pixel]) -> bool {
        pixels
            .iter()
            .any(|&(r, c)| r == 0 || c == 0 || r + 1 == self.height || c + 1 == self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleOptions {
    pub min_pixels: usize,
    pub min_elongation: f64,
    pub min_frames: usize,
    /// Require the pixel minimum in every frame rather than at some frame.
    pub strict_min_pixels: bool,
}

impl Default for RuleOptions {
    fn default() -> Self {
        Self {
            min_pixels: 10,
            min_elongation: 3.0,
            min_frames: 2,
            strict_min_pixels: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RuleReport {
    pub min_pixels_ok: bool,
    pub elongation_ok: bool,
    pub entry_ok: bool,
    pub persistence_ok: bool,
    pub elongation_max: f64,
    pub pixel_count_max: usize,
}

impl RuleReport {
    pub fn is_valid(&self) -> bool {
        self.min_pixels_ok && self.elongation_ok && self.entry_ok && self.persistence_ok
    }
}

/// Check a track against the four labeling rules.
///
/// `prior_frame_mask` is the full label mask of the frame immediately before
/// the track's first frame; `None` when the track starts on the first frame of
/// the record, in which case sudden appearance holds vacuously.
pub fn validate_track(
    track: &ComponentTrack,
    prior_frame_mask: Option<&BitMask>,
    opts: &RuleOptions,
) -> RuleReport {
    let counts: Vec<usize> = track.frames.iter().map(|(_, px)| px.len()).collect();
    let pixel_count_max = counts.iter().copied().max().unwrap_or(0);
    let min_pixels_ok = if opts.strict_min_pixels {
        !counts.is_empty() && counts.iter().all(|&n| n >= opts.min_pixels)
    } else {
        pixel_count_max >= opts.min_pixels
    };

    let elongation_max = track
        .frames
        .iter()
        .filter_map(|(_, px)| elongation(px).ok())
        .fold(0.0, f64::max);

    let entry_ok = match track.frames.first() {
        None => false,
        Some((_, first)) => {
            track.touches_border(first)
                || prior_frame_mask.is_none_or(|prior| {
                    !first
                        .iter()
                        .any(|&(r, c)| r < prior.height() && c < prior.width() && prior.get(r, c))
                })
        }
    };

    RuleReport {
        min_pixels_ok,
        elongation_ok: elongation_max >= opts.min_elongation,
        entry_ok,
        persistence_ok: track.frames.len() >= opts.min_frames,
        elongation_max,
        pixel_count_max,
    }
}
