use alloc::format;
use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::image::Image;
use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::label::{Domain, EmotionLabel, NUM_CLASSES};
use crate::rng::{rng_for, tag, Rng};

/// Target-domain corruption strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub noise_sigma: f32,
    pub brightness_shift: f32,
    pub max_translate: usize,
}

impl Default for Corruption {
    fn default() -> Self {
        Self { noise_sigma: 0.15, brightness_shift: 0.2, max_translate: 3 }
    }
}

/// Parameters of the ToyEmotions benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub image_size: usize,
    pub per_class_count_source: usize,
    pub per_class_count_target: usize,
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            image_size: 32,
            per_class_count_source: 100,
            per_class_count_target: 50,
            corruption: Corruption::default(),
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        let c = &self.corruption;
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.image_size < 16 {
            return bad("image_size must be at least 16");
        }
        if self.per_class_count_source < 1 || self.per_class_count_target < 1 {
            return bad("per-class counts must be at least 1");
        }
        if !(c.noise_sigma >= 0.0 && c.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(0.0..=0.5).contains(&c.brightness_shift) {
            return bad("brightness_shift must lie in [0, 0.5]");
        }
        if 4 * c.max_translate >= self.image_size {
            return bad("max_translate must be below image_size / 4");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDomain {
    pub manifest: DatasetManifest,
    /// Aligned with `manifest.entries()`.
    pub images: Vec<Image>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBenchmark {
    pub source: ToyDomain,
    pub target: ToyDomain,
}

struct Glyph {
    angle: f32,
    center: (f32, f32),
    length: f32,
    intensity: f32,
}

impl Glyph {
    fn sample(label: EmotionLabel, size: usize, rng: &mut Rng) -> Self {
        let s = size as f32;
        let base = label.index() as f32 * 30.0;
        let jitter: f32 = rng.random_range(-4.0..=4.0);
        let cx = s / 2.0 + rng.random_range(-1.5..=1.5);
        let cy = s / 2.0 + rng.random_range(-1.5..=1.5);
        Self {
            angle: (base + jitter).to_radians(),
            center: (cx, cy),
            length: s * rng.random_range(0.55..=0.7),
            intensity: rng.random_range(0.75..=1.0),
        }
    }

    /// `bars` parallel anti-aliased segments spaced across the glyph axis.
    fn render(&self, bars: usize, size: usize) -> Image {
        let s = size as f32;
        let spacing = 0.13 * s;
        let half_width = 0.03 * s;
        let (dir_x, dir_y) = (self.angle.cos(), -self.angle.sin());
        let (norm_x, norm_y) = (-dir_y, dir_x);
        let half_len = self.length / 2.0;
        let mut img = Image::zeros(size, size);
        for row in 0..size {
            for col in 0..size {
                let px = col as f32 + 0.5 - self.center.0;
                let py = row as f32 + 0.5 - self.center.1;
                let along = px * dir_x + py * dir_y;
                let across = px * norm_x + py * norm_y;
                let overshoot = (along.abs() - half_len).max(0.0);
                let mut cover: f32 = 0.0;
                for b in 0..bars {
                    let offset = (b as f32 - (bars as f32 - 1.0) / 2.0) * spacing;
                    let d = (overshoot * overshoot + (across - offset).powi(2)).sqrt();
                    cover = cover.max((half_width + 0.5 - d).clamp(0.0, 1.0));
                }
                img.set(row, col, cover * self.intensity);
            }
        }
        img
    }
}

fn corrupt(clean: &Image, c: &Corruption, rng: &mut Rng) -> Image {
    let size = clean.height();
    let mut img = if c.max_translate > 0 {
        let t = c.max_translate as i64;
        let dx = rng.random_range(-t..=t);
        let dy = rng.random_range(-t..=t);
        let mut shifted = Image::zeros(size, clean.width());
        for row in 0..size as i64 {
            for col in 0..clean.width() as i64 {
                let (sr, sc) = (row - dy, col - dx);
                if (0..size as i64).contains(&sr) && (0..clean.width() as i64).contains(&sc) {
                    shifted.set(row as usize, col as usize, clean.get(sr as usize, sc as usize));
                }
            }
        }
        shifted
    } else {
        clean.clone()
    };
    if c.brightness_shift > 0.0 {
        let shift: f32 = rng.random_range(-c.brightness_shift..=c.brightness_shift);
        img.pixels_mut().iter_mut().for_each(|v| *v += shift);
    }
    if c.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, c.noise_sigma).expect("validated sigma");
        img.pixels_mut().iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    img.clip_unit();
    img
}

fn render_domain(spec: &ToySpec, domain: Domain) -> Result<ToyDomain> {
    let per_class = match domain {
        Domain::Source => spec.per_class_count_source,
        Domain::Target => spec.per_class_count_target,
    };
    let mut entries = Vec::with_capacity(per_class * NUM_CLASSES);
    let mut images = Vec::with_capacity(per_class * NUM_CLASSES);
    for label in EmotionLabel::all() {
        for index in 0..per_class {
            // The glyph instance is shared across domains; only corruption differs.
            let mut instance_rng =
                rng_for(spec.seed, &[tag::TOY_INSTANCE, label.index() as u64, index as u64]);
            let clean = Glyph::sample(label, spec.image_size, &mut instance_rng)
                .render(label.index() + 1, spec.image_size);
            let image = match domain {
                Domain::Source => clean,
                Domain::Target => {
                    let mut rng =
                        rng_for(spec.seed, &[tag::TOY_CORRUPT, label.index() as u64, index as u64]);
                    corrupt(&clean, &spec.corruption, &mut rng)
                }
            };
            entries.push(ManifestEntry {
                image: format!("{domain}/{}/{index}.png", label.index()),
                label,
                domain,
            });
            images.push(image);
        }
    }
    Ok(ToyDomain { manifest: DatasetManifest::new(entries)?, images })
}

/// Render the clean source domain and the corrupted target domain.
pub fn generate_toy_benchmark(spec: &ToySpec) -> Result<ToyBenchmark> {
    spec.validate()?;
    Ok(ToyBenchmark {
        source: render_domain(spec, Domain::Source)?,
        target: render_domain(spec, Domain::Target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_distribution;

    fn small() -> ToySpec {
        ToySpec { per_class_count_source: 4, per_class_count_target: 3, ..ToySpec::default() }
    }

    #[test]
    fn identity_corruption_copies_source() {
        let spec = ToySpec {
            corruption: Corruption { noise_sigma: 0.0, brightness_shift: 0.0, max_translate: 0 },
            ..small()
        };
        let bench = generate_toy_benchmark(&spec).unwrap();
        for (t, entry) in bench.target.images.iter().zip(bench.target.manifest.entries()) {
            let (label, idx) = (entry.label.index(), entry.image.clone());
            let src_pos = bench
                .source
                .manifest
                .entries()
                .iter()
                .position(|e| e.label.index() == label && e.image.replace("source", "target") == idx)
                .unwrap();
            let s = &bench.source.images[src_pos];
            assert!(t.pixels().iter().zip(s.pixels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_toy_benchmark(&small()).unwrap();
        let b = generate_toy_benchmark(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_toy_benchmark(&ToySpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.target.images, c.target.images);
    }

    #[test]
    fn counts_and_range() {
        let spec = ToySpec { per_class_count_source: 100, per_class_count_target: 2, ..small() };
        let bench = generate_toy_benchmark(&spec).unwrap();
        let mut naive = [0usize; NUM_CLASSES];
        for e in bench.source.manifest.entries() {
            naive[e.label.index()] += 1;
        }
        assert_eq!(naive, [100; 6]);
        assert_eq!(class_distribution(&bench.source.manifest), naive);
        assert!(bench.source.images.iter().chain(&bench.target.images).all(Image::in_unit_range));
        assert!(bench.target.manifest.all_in_domain(Domain::Target));
    }

    #[test]
    fn classes_render_differently() {
        let bench = generate_toy_benchmark(&small()).unwrap();
        let ink: Vec<f32> = (0..NUM_CLASSES)
            .map(|k| bench.source.images[k * 4].pixels().iter().sum())
            .collect();
        // more bars, more ink
        assert!(ink[5] > ink[0] * 3.0, "{ink:?}");
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            ToySpec { image_size: 8, ..small() },
            ToySpec { per_class_count_source: 0, ..small() },
            ToySpec { corruption: Corruption { noise_sigma: -1.0, ..Corruption::default() }, ..small() },
            ToySpec { corruption: Corruption { brightness_shift: 0.6, ..Corruption::default() }, ..small() },
            ToySpec { corruption: Corruption { max_translate: 8, ..Corruption::default() }, ..small() },
        ] {
            assert!(matches!(generate_toy_benchmark(&spec), Err(Error::Config(_))), "{spec:?}");
        }
    }
}
