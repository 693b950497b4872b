//! Datasets: the IDX image/label format, CIFAR-10 binary batches, and
//! deterministic synthetic generators that write those exact formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array4;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `(n, c, h, w)`, values in `[0, 1]`.
    pub images: Array4<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self
                .images
                .slice(ndarray::s![0..n, .., .., ..])
                .to_owned(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn read_u32_be<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// IDX image file: big-endian magic 0x00000803, then count, rows, cols, then
/// unsigned bytes. Pixels normalize to `[0, 1]`.
pub fn load_idx_images(path: &Path) -> Result<Array4<f32>> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
    );
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = read_u32_be(&mut r)? as usize;
    let h = read_u32_be(&mut r)? as usize;
    let w = read_u32_be(&mut r)? as usize;
    if n > 10_000_000 || h == 0 || w == 0 || h > 4096 || w > 4096 {
        return Err(Error::Format(format!(
            "{}: implausible dims {n}x{h}x{w}",
            path.display()
        )));
    }
    let mut bytes = vec![0u8; n * h * w];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("{}: truncated image data: {e}", path.display())))?;
    let data: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Array4::from_shape_vec((n, 1, h, w), data)
        .map_err(|e| Error::Format(e.to_string()))?)
}

/// IDX label file: big-endian magic 0x00000801, then count, then bytes.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
    );
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = read_u32_be(&mut r)? as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)
        .map_err(|e| Error::Format(format!("{}: truncated labels: {e}", path.display())))?;
    Ok(labels)
}

pub fn write_idx_images(path: &Path, pixels: &[u8], n: usize, h: usize, w: usize) -> Result<()> {
    if pixels.len() != n * h * w {
        return Err(Error::Shape(format!(
            "pixel count {} does not match {n}x{h}x{w}",
            pixels.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    out.write_all(&(n as u32).to_be_bytes())?;
    out.write_all(&(h as u32).to_be_bytes())?;
    out.write_all(&(w as u32).to_be_bytes())?;
    out.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Load the standard IDX file pair from a directory (`train-*` or `t10k-*`).
pub fn load_mnist_dir(dir: &Path, train: bool) -> Result<Dataset> {
    let prefix = if train { "train" } else { "t10k" };
    let images = load_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = load_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    if images.dim().0 != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.dim().0,
            labels.len()
        )));
    }
    Ok(Dataset { images, labels })
}

/// One CIFAR-10 binary batch: records of 1 label byte + 3072 channel-planar
/// pixel bytes. The record count is the file size divided by 3073, which
/// must be exact.
pub fn load_cifar_batch(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format(format!(
            "{}: size {} is not a multiple of {CIFAR_RECORD}",
            path.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = vec![0.0f32; n * 3 * 32 * 32];
    for i in 0..n {
        let rec = &bytes[i * CIFAR_RECORD..(i + 1) * CIFAR_RECORD];
        if rec[0] > 9 {
            return Err(Error::Format(format!(
                "{}: record {i} has label {}",
                path.display(),
                rec[0]
            )));
        }
        labels.push(rec[0]);
        for (k, &b) in rec[1..].iter().enumerate() {
            data[i * 3072 + k] = b as f32 / 255.0;
        }
    }
    Ok(Dataset {
        images: Array4::from_shape_vec((n, 3, 32, 32), data)
            .map_err(|e| Error::Format(e.to_string()))?,
        labels,
    })
}

/// Standard directory layout: `data_batch_1..5.bin` for training (whichever
/// exist, at least one) and `test_batch.bin` for test.
pub fn load_cifar10_dir(dir: &Path, train: bool) -> Result<Dataset> {
    if !train {
        return load_cifar_batch(&dir.join("test_batch.bin"));
    }
    let mut parts = Vec::new();
    for i in 1..=5 {
        let p = dir.join(format!("data_batch_{i}.bin"));
        if p.exists() {
            parts.push(load_cifar_batch(&p)?);
        }
    }
    if parts.is_empty() {
        return Err(Error::Format(format!(
            "{}: no data_batch_*.bin files",
            dir.display()
        )));
    }
    let n: usize = parts.iter().map(|d| d.len()).sum();
    let mut images = Array4::zeros((n, 3, 32, 32));
    let mut labels = Vec::with_capacity(n);
    let mut at = 0;
    for part in parts {
        let k = part.len();
        images
            .slice_mut(ndarray::s![at..at + k, .., .., ..])
            .assign(&part.images);
        labels.extend_from_slice(&part.labels);
        at += k;
    }
    Ok(Dataset { images, labels })
}

pub fn write_cifar_batch(path: &Path, pixels: &[u8], labels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * 3072 {
        return Err(Error::Shape(format!(
            "{} pixels for {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for (i, &label) in labels.iter().enumerate() {
        out.write_all(&[label])?;
        out.write_all(&pixels[i * 3072..(i + 1) * 3072])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synthetic digits (28x28 grayscale)

fn arc(cx: f32, cy: f32, rx: f32, ry: f32, a0: f32, a1: f32, n: usize) -> Vec<(f32, f32)> {
    (0..=n)
        .map(|i| {
            let t = a0 + (a1 - a0) * i as f32 / n as f32;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Stroke skeletons per digit class, in a unit box (x right, y down).
fn digit_strokes(d: u8) -> Vec<Vec<(f32, f32)>> {
    use std::f32::consts::PI;
    match d {
        0 => vec![arc(0.5, 0.5, 0.26, 0.36, 0.0, 2.0 * PI, 28)],
        1 => vec![
            vec![(0.35, 0.28), (0.55, 0.13)],
            vec![(0.55, 0.13), (0.55, 0.87)],
        ],
        2 => {
            let mut top = arc(0.48, 0.32, 0.24, 0.20, PI, 2.0 * PI + 0.35, 14);
            top.push((0.26, 0.84));
            vec![top, vec![(0.26, 0.84), (0.76, 0.84)]]
        }
        3 => vec![
            arc(0.45, 0.31, 0.22, 0.18, -0.75 * PI, 0.5 * PI, 14),
            arc(0.45, 0.68, 0.24, 0.20, -0.5 * PI, 0.75 * PI, 14),
        ],
        4 => vec![
            vec![(0.62, 0.12), (0.24, 0.62)],
            vec![(0.24, 0.62), (0.80, 0.62)],
            vec![(0.62, 0.12), (0.62, 0.88)],
        ],
        5 => {
            let mut s = vec![
                vec![(0.72, 0.14), (0.30, 0.14)],
                vec![(0.30, 0.14), (0.28, 0.45)],
            ];
            s.push(arc(0.46, 0.65, 0.24, 0.22, -0.55 * PI, 0.8 * PI, 16));
            s
        }
        6 => {
            let mut tail = arc(0.58, 0.40, 0.30, 0.34, 0.8 * PI, 1.5 * PI, 12);
            tail.insert(0, (0.64, 0.13));
            vec![tail, arc(0.48, 0.66, 0.20, 0.20, 0.0, 2.0 * PI, 20)]
        }
        7 => vec![
            vec![(0.25, 0.15), (0.76, 0.15)],
            vec![(0.76, 0.15), (0.42, 0.88)],
        ],
        8 => vec![
            arc(0.5, 0.31, 0.18, 0.17, 0.0, 2.0 * PI, 20),
            arc(0.5, 0.68, 0.22, 0.20, 0.0, 2.0 * PI, 20),
        ],
        9 => vec![
            arc(0.5, 0.34, 0.20, 0.20, 0.0, 2.0 * PI, 20),
            vec![(0.70, 0.36), (0.64, 0.87)],
        ],
        _ => unreachable!("digit class out of range"),
    }
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Render one augmented digit into a 28x28 byte raster.
fn render_digit(class: u8, rng: &mut ChaCha8Rng) -> [u8; 28 * 28] {
    let rot: f32 = rng.gen_range(-0.21..0.21);
    let scale_x: f32 = rng.gen_range(0.80..1.12);
    let scale_y: f32 = rng.gen_range(0.80..1.12);
    let shear: f32 = rng.gen_range(-0.15..0.15);
    let tx: f32 = rng.gen_range(-0.09..0.09);
    let ty: f32 = rng.gen_range(-0.09..0.09);
    let thick: f32 = rng.gen_range(0.050..0.085);
    let amplitude: f32 = rng.gen_range(0.72..1.0);
    let noise: f32 = 0.055;

    let (sin, cos) = rot.sin_cos();
    let transform = |(x, y): (f32, f32)| -> (f32, f32) {
        let (cx, cy) = (x - 0.5, y - 0.5);
        let (cx, cy) = (cx * scale_x + shear * cy, cy * scale_y);
        (
            cx * cos - cy * sin + 0.5 + tx,
            cx * sin + cy * cos + 0.5 + ty,
        )
    };

    let segments: Vec<((f32, f32), (f32, f32))> = digit_strokes(class)
        .into_iter()
        .flat_map(|stroke| {
            let pts: Vec<(f32, f32)> = stroke.into_iter().map(transform).collect();
            pts.windows(2)
                .map(|w| (w[0], w[1]))
                .collect::<Vec<_>>()
        })
        .collect();

    let aa = 0.028; // soft edge width in unit coords
    let mut out = [0u8; 28 * 28];
    for py in 0..28 {
        for px in 0..28 {
            let p = ((px as f32 + 0.5) / 28.0, (py as f32 + 0.5) / 28.0);
            let mut d = f32::INFINITY;
            for (a, b) in &segments {
                d = d.min(dist_to_segment(p, *a, *b));
                if d <= 0.0 {
                    break;
                }
            }
            let ink = ((thick - d) / aa).clamp(0.0, 1.0) * amplitude;
            let n: f32 = rng.gen_range(-noise..noise);
            out[py * 28 + px] = ((ink + n).clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// synthetic textures (32x32 RGB)

fn smoothstep(x: f32) -> f32 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Scalar pattern in `[0, 1]` for one texture class at unit coordinates.
fn texture_pattern(class: u8, u: f32, v: f32, p: &TextureParams) -> f32 {
    use std::f32::consts::PI;
    match class {
        // oriented stripes: horizontal / vertical / diagonal
        0 => 0.5 + 0.5 * (2.0 * PI * p.freq * v + p.phase).sin(),
        1 => 0.5 + 0.5 * (2.0 * PI * p.freq * u + p.phase).sin(),
        2 => {
            let s = u * p.angle.cos() + v * p.angle.sin();
            0.5 + 0.5 * (2.0 * PI * p.freq * s + p.phase).sin()
        }
        // checkerboard
        3 => {
            let k = p.freq;
            let cell = ((u * k).floor() + (v * k).floor()) as i64;
            if cell.rem_euclid(2) == 0 {
                1.0
            } else {
                0.0
            }
        }
        // concentric rings
        4 => {
            let r = ((u - p.cx).powi(2) + (v - p.cy).powi(2)).sqrt();
            0.5 + 0.5 * (2.0 * PI * p.freq * r + p.phase).sin()
        }
        // gaussian blobs
        5 => {
            let mut acc = 0.35f32;
            for &(bx, by, bs, ba) in &p.blobs {
                let d2 = (u - bx).powi(2) + (v - by).powi(2);
                acc += ba * (-d2 / (2.0 * bs * bs)).exp();
            }
            acc.clamp(0.0, 1.0)
        }
        // one large disk
        6 => {
            let r = ((u - p.cx).powi(2) + (v - p.cy).powi(2)).sqrt();
            smoothstep((p.radius - r) / 0.06)
        }
        // soft directional step
        7 => {
            let s = (u - 0.5) * p.angle.cos() + (v - 0.5) * p.angle.sin();
            smoothstep((s - p.offset) / p.width)
        }
        // cross of two bars
        8 => {
            let h = ((u - p.cx).abs() < p.width) as u8 as f32;
            let w = ((v - p.cy).abs() < p.width) as u8 as f32;
            (h + w).min(1.0)
        }
        // grid of squares
        9 => {
            let fu = (u * p.freq).fract();
            let fv = (v * p.freq).fract();
            ((fu < p.duty) && (fv < p.duty)) as u8 as f32
        }
        _ => unreachable!("texture class out of range"),
    }
}

struct TextureParams {
    freq: f32,
    phase: f32,
    angle: f32,
    cx: f32,
    cy: f32,
    radius: f32,
    offset: f32,
    width: f32,
    duty: f32,
    blobs: Vec<(f32, f32, f32, f32)>,
}

impl TextureParams {
    fn sample(class: u8, rng: &mut ChaCha8Rng) -> TextureParams {
        use std::f32::consts::PI;
        let mut p = TextureParams {
            freq: rng.gen_range(2.6..5.6),
            phase: rng.gen_range(0.0..2.0 * PI),
            angle: PI / 4.0 + rng.gen_range(-0.31f32..0.31),
            cx: rng.gen_range(0.38..0.62),
            cy: rng.gen_range(0.38..0.62),
            radius: rng.gen_range(0.20..0.33),
            offset: rng.gen_range(-0.12..0.12),
            width: rng.gen_range(0.06..0.22),
            duty: rng.gen_range(0.42..0.62),
            blobs: Vec::new(),
        };
        if class == 3 {
            p.freq = rng.gen_range(2.6..5.4);
        }
        if class == 8 {
            p.width = rng.gen_range(0.07..0.14);
        }
        if class == 9 {
            p.freq = rng.gen_range(3.2..5.4);
        }
        if class == 5 {
            let n = rng.gen_range(5..10);
            p.blobs = (0..n)
                .map(|_| {
                    (
                        rng.gen_range(0.1f32..0.9),
                        rng.gen_range(0.1f32..0.9),
                        rng.gen_range(0.05f32..0.12),
                        rng.gen_range(-1.0f32..1.0),
                    )
                })
                .collect();
        }
        p
    }
}

/// Render one texture image in CIFAR plane order (R plane, G, B).
fn render_texture(class: u8, rng: &mut ChaCha8Rng) -> [u8; 3072] {
    let p = TextureParams::sample(class, rng);
    // colors carry no class information
    let (c0, c1) = loop {
        let c0: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let c1: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let sep: f32 = c0.iter().zip(&c1).map(|(a, b)| (a - b).abs()).sum();
        if sep > 0.8 {
            break (c0, c1);
        }
    };
    let amplitude: f32 = rng.gen_range(0.45..1.0);
    let noise = 0.065f32;

    let mut out = [0u8; 3072];
    for py in 0..32 {
        for px in 0..32 {
            let u = (px as f32 + 0.5) / 32.0;
            let v = (py as f32 + 0.5) / 32.0;
            let raw = texture_pattern(class, u, v, &p);
            let t = 0.5 + amplitude * (raw - 0.5);
            for ch in 0..3 {
                let val = c0[ch] + t * (c1[ch] - c0[ch]);
                let n: f32 = rng.gen_range(-noise..noise);
                out[ch * 1024 + py * 32 + px] =
                    ((val + n).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    out
}

fn balanced_labels(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i % 10) as u8).collect()
}

/// Deterministic digit-classification corpus (28x28 grayscale, 10 balanced
/// classes): procedurally rendered digit glyphs under random affine warp,
/// stroke-width, contrast and noise augmentation.
pub fn generate_digits(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let labels = balanced_labels(n);
    let pixels: Vec<[u8; 784]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            render_digit(labels[i], &mut rng)
        })
        .collect();
    (pixels.concat(), labels)
}

/// Deterministic texture-classification corpus (32x32 RGB, 10 balanced
/// classes): geometric texture families with heavy parameter, color,
/// contrast and noise jitter. Colors are uninformative by construction.
pub fn generate_textures(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let labels = balanced_labels(n);
    let pixels: Vec<[u8; 3072]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0xd1b54a32d192ed03));
            render_texture(labels[i], &mut rng)
        })
        .collect();
    (pixels.concat(), labels)
}

/// Write a digit corpus in the standard IDX file layout.
pub fn write_digits_dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (train_px, train_labels) = generate_digits(n_train, seed);
    let (test_px, test_labels) = generate_digits(n_test, seed.wrapping_add(0x7e57));
    write_idx_images(&dir.join("train-images-idx3-ubyte"), &train_px, n_train, 28, 28)?;
    write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels)?;
    write_idx_images(&dir.join("t10k-images-idx3-ubyte"), &test_px, n_test, 28, 28)?;
    write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels)?;
    Ok(())
}

/// Write a texture corpus in the CIFAR-10 binary batch layout.
pub fn write_textures_dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (train_px, train_labels) = generate_textures(n_train, seed);
    let (test_px, test_labels) = generate_textures(n_test, seed.wrapping_add(0x7e57));
    write_cifar_batch(&dir.join("data_batch_1.bin"), &train_px, &train_labels)?;
    write_cifar_batch(&dir.join("test_batch.bin"), &test_px, &test_labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip() {
        let dir = std::env::temp_dir().join("xbar_idx_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let (px, labels) = generate_digits(20, 3);
        let img_path = dir.join("imgs");
        let lab_path = dir.join("labs");
        write_idx_images(&img_path, &px, 20, 28, 28).unwrap();
        write_idx_labels(&lab_path, &labels).unwrap();
        let images = load_idx_images(&img_path).unwrap();
        let back = load_idx_labels(&lab_path).unwrap();
        assert_eq!(images.dim(), (20, 1, 28, 28));
        assert_eq!(back, labels);
        // pixel values round-trip through /255
        assert_eq!(
            (images[(0, 0, 14, 14)] * 255.0).round() as u8,
            px[14 * 28 + 14]
        );
    }

    #[test]
    fn cifar_round_trip_and_truncation() {
        let dir = std::env::temp_dir().join("xbar_cifar_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let (px, labels) = generate_textures(10, 4);
        let path = dir.join("batch.bin");
        write_cifar_batch(&path, &px, &labels).unwrap();
        let ds = load_cifar_batch(&path).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.labels, labels);
        // channel-planar order
        assert_eq!((ds.images[(3, 2, 0, 0)] * 255.0).round() as u8, px[3 * 3072 + 2 * 1024]);

        // truncated file is a format error
        let bytes = std::fs::read(&path).unwrap();
        let bad = dir.join("bad.bin");
        std::fs::write(&bad, &bytes[..bytes.len() - 7]).unwrap();
        assert!(load_cifar_batch(&bad).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let (a, la) = generate_digits(12, 9);
        let (b, lb) = generate_digits(12, 9);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = generate_digits(12, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn idx_bad_magic_rejected() {
        let dir = std::env::temp_dir().join("xbar_idx_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk");
        std::fs::write(&path, [0u8, 0, 8, 4, 0, 0, 0, 1]).unwrap();
        assert!(load_idx_images(&path).is_err());
    }
}
