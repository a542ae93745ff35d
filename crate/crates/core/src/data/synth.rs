//! Synthetic endoscopy-like frames: smooth multi-scale tissue texture with
//! folds, a dark lumen and specular highlights. Abnormal frames add one
//! raised elliptical blob whose colour leans away from red tissue towards
//! cyan.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Image, Label, LabeledFrame};
use crate::rng::{mix, stream, substream};
use crate::{Error, Result};

pub const FRAME_SIZE: usize = 64;
pub const MIN_LESION_RADIUS: f64 = 2.0;
pub const MAX_LESION_RADIUS: f64 = 16.0;

/// Per-channel colour shift added to the lesion bump.
const LESION_TINT: [f64; 3] = [-0.3, 0.2, 0.4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub frames_per_patient: usize,
    /// Fraction of each patient's frames that carry a lesion.
    pub abnormal_fraction: f64,
    /// Lesion semi-axis range in pixels.
    pub lesion_radius_range: (f64, f64),
    /// Peak lesion intensity range.
    pub lesion_contrast_range: (f64, f64),
    pub background_texture_scale: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 15,
            frames_per_patient: 100,
            abnormal_fraction: 0.3,
            lesion_radius_range: (8.0, 12.0),
            lesion_contrast_range: (0.4, 1.0),
            background_texture_scale: 1.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.lesion_radius_range;
        if !(MIN_LESION_RADIUS..=MAX_LESION_RADIUS).contains(&r0) || !(r0..=MAX_LESION_RADIUS).contains(&r1) {
            return Err(Error::config(format!(
                "lesion radius range must lie within [{MIN_LESION_RADIUS}, {MAX_LESION_RADIUS}], got ({r0}, {r1})"
            )));
        }
        let (c0, c1) = self.lesion_contrast_range;
        if !(0.0..=1.0).contains(&c0) || !(c0..=1.0).contains(&c1) || c1 <= 0.0 {
            return Err(Error::config(format!("lesion contrast range must lie within [0, 1], got ({c0}, {c1})")));
        }
        if !(self.background_texture_scale > 0.0) || !self.background_texture_scale.is_finite() {
            return Err(Error::config("background texture scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.abnormal_fraction) {
            return Err(Error::config("abnormal fraction must lie within [0, 1]"));
        }
        Ok(())
    }
}

/// Per-patient appearance shared by all of a patient's frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientStyle {
    pub base: [f64; 3],
    pub texture_amplitude: f64,
    pub fold_strength: f64,
}

/// An elliptical raised blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
    pub contrast: f64,
}

impl Lesion {
    /// Normalized elliptical radius of pixel center `(x, y)`; `< 1` inside.
    pub fn radius_at(&self, x: usize, y: usize) -> f64 {
        let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        (u * u + v * v).sqrt()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.radius_at(x, y) < 1.0
    }

    /// Dome profile in `[0, 1]`, positive exactly inside the mask.
    fn profile(&self, x: usize, y: usize) -> f64 {
        let r = self.radius_at(x, y);
        if r < 1.0 {
            (1.0 - r * r).powf(1.5)
        } else {
            0.0
        }
    }
}

/// Everything needed to render one frame deterministically.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecipe {
    pub patient_id: u32,
    pub index: usize,
    pub seed: u64,
    pub style: PatientStyle,
    pub lesion: Option<Lesion>,
}

impl FrameRecipe {
    pub fn label(&self) -> Label {
        if self.lesion.is_some() {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    pub fn id(&self) -> String {
        format!("{:03}_{:04}", self.patient_id, self.index)
    }
}

fn patient_style(rng: &mut ChaCha8Rng, texture_scale: f64) -> PatientStyle {
    PatientStyle {
        base: [rng.gen_range(0.62..0.82), rng.gen_range(0.30..0.46), rng.gen_range(0.24..0.38)],
        texture_amplitude: texture_scale * rng.gen_range(0.12..0.22),
        fold_strength: rng.gen_range(0.04..0.12),
    }
}

fn draw_lesion(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Lesion {
    let (r0, r1) = cfg.lesion_radius_range;
    let (c0, c1) = cfg.lesion_contrast_range;
    let r = if r1 > r0 { rng.gen_range(r0..r1) } else { r0 };
    let aspect = rng.gen_range(0.7..1.0);
    let margin = r + 2.0;
    let span = FRAME_SIZE as f64 - 2.0 * margin;
    Lesion {
        cx: margin + rng.gen::<f64>() * span,
        cy: margin + rng.gen::<f64>() * span,
        rx: r,
        ry: (r * aspect).max(MIN_LESION_RADIUS.min(r)),
        angle: rng.gen_range(0.0..PI),
        contrast: if c1 > c0 { rng.gen_range(c0..c1) } else { c0 },
    }
}

/// Frame recipes for the whole corpus, grouped by patient.
pub fn corpus_recipes(cfg: &SynthConfig) -> Result<Vec<FrameRecipe>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_patients * cfg.frames_per_patient);
    for p in 0..cfg.n_patients {
        let mut rng = substream(mix(cfg.rng_seed, p as u64), stream::SYNTH);
        let style = patient_style(&mut rng, cfg.background_texture_scale);
        let n_abnormal = (cfg.abnormal_fraction * cfg.frames_per_patient as f64).round() as usize;
        let mut order: Vec<usize> = (0..cfg.frames_per_patient).collect();
        order.shuffle(&mut rng);
        let mut abnormal = vec![false; cfg.frames_per_patient];
        for &i in order.iter().take(n_abnormal) {
            abnormal[i] = true;
        }
        for (index, &is_abnormal) in abnormal.iter().enumerate() {
            let lesion = is_abnormal.then(|| draw_lesion(&mut rng, cfg));
            out.push(FrameRecipe {
                patient_id: p as u32,
                index,
                seed: mix(cfg.rng_seed ^ 0x5EED, (p * cfg.frames_per_patient + index) as u64),
                style: style.clone(),
                lesion,
            });
        }
    }
    Ok(out)
}

/// Smooth value noise on a `cells x cells` lattice, bilinearly interpolated
/// with a smoothstep fade, sampled at pixel centers.
fn value_noise(rng: &mut ChaCha8Rng, cells: usize) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; FRAME_SIZE * FRAME_SIZE];
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..FRAME_SIZE {
        let gy = (y as f64 + 0.5) / FRAME_SIZE as f64 * cells as f64;
        let (y0, ty) = ((gy.floor() as usize).min(cells - 1), fade(gy - gy.floor()));
        for x in 0..FRAME_SIZE {
            let gx = (x as f64 + 0.5) / FRAME_SIZE as f64 * cells as f64;
            let (x0, tx) = ((gx.floor() as usize).min(cells - 1), fade(gx - gx.floor()));
            let at = |i: usize, j: usize| lattice[i * (cells + 1) + j];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out[y * FRAME_SIZE + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

/// Render a recipe. Background randomness comes only from the recipe seed,
/// so a recipe with its lesion removed renders the identical background.
pub fn render(recipe: &FrameRecipe) -> Image {
    let mut rng = substream(recipe.seed, stream::SYNTH);
    let n = FRAME_SIZE * FRAME_SIZE;
    let style = &recipe.style;

    // luminance texture: four octaves
    let mut texture = vec![0.0; n];
    let mut amp = 1.0;
    for cells in [2, 4, 8, 16] {
        let octave = value_noise(&mut rng, cells);
        texture.iter_mut().zip(&octave).for_each(|(t, o)| *t += amp * o);
        amp *= 0.5;
    }
    let hue = value_noise(&mut rng, 3);

    let fold_angle = rng.gen_range(0.0..PI);
    let fold_freq = rng.gen_range(1.5..3.0);
    let fold_phase = rng.gen_range(0.0..2.0 * PI);
    let (lx, ly) = (rng.gen_range(8.0..56.0), rng.gen_range(8.0..56.0));
    let lumen_sigma = rng.gen_range(6.0..14.0);
    let lumen_depth = rng.gen_range(0.3..0.6);
    let n_spec = rng.gen_range(0..4usize);
    let speculars: Vec<(f64, f64, f64, f64)> = (0..n_spec)
        .map(|_| (rng.gen_range(2.0..62.0), rng.gen_range(2.0..62.0), rng.gen_range(0.6..1.4), rng.gen_range(0.3..0.7)))
        .collect();
    let gain = rng.gen_range(0.9..1.1);

    let mut data = vec![0f32; 3 * n];
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            let i = y * FRAME_SIZE + x;
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let along = (fx * fold_angle.cos() + fy * fold_angle.sin()) / FRAME_SIZE as f64;
            let fold = style.fold_strength * (2.0 * PI * fold_freq * along + fold_phase).sin();
            let d2 = (fx - lx).powi(2) + (fy - ly).powi(2);
            let shade = gain * (1.0 - lumen_depth * (-d2 / (2.0 * lumen_sigma * lumen_sigma)).exp());
            let spec: f64 = speculars
                .iter()
                .map(|&(sx, sy, s, a)| a * (-((fx - sx).powi(2) + (fy - sy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            let bump = recipe.lesion.as_ref().map_or(0.0, |l| l.contrast * l.profile(x, y));
            for c in 0..3 {
                let colour = 0.04 * hue[i] * if c == 0 { 1.0 } else { -0.5 };
                let reflect = style.base[c] * (1.0 + style.texture_amplitude * texture[i] + fold) + colour
                    + bump * (0.5 + LESION_TINT[c]);
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.01;
                let v = reflect * shade + spec + noise;
                data[c * n + i] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(FRAME_SIZE, FRAME_SIZE, data).expect("rendered values are clamped")
}

/// Deterministic synthetic corpus; frames are ordered by patient then index.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Vec<LabeledFrame>> {
    Ok(corpus_recipes(cfg)?
        .iter()
        .map(|r| LabeledFrame { id: r.id(), pixels: render(r), patient_id: r.patient_id, label: r.label() })
        .collect())
}
