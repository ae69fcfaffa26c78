//! Image ingestion, block extraction, vectorization and impulse corruption.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Grayscale image with intensities in [0, 1], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SonarImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl SonarImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(
                "dimensions",
                "width and height must be at least 1",
            ));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels supplied for a {}x{} image",
                pixels.len(),
                width,
                height
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(
                "pixels",
                format!("intensity {bad} outside [0, 1]"),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image filled with `value`, which is clamped to [0, 1].
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value.clamp(0.0, 1.0); width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// The whole image as a single block shape.
    pub fn shape(&self) -> BlockShape {
        BlockShape {
            m: self.height,
            n: self.width,
        }
    }
}

/// Block extent: `m` rows by `n` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockShape {
    pub m: usize,
    pub n: usize,
}

impl BlockShape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::param("block_shape", "m and n must be at least 1"));
        }
        Ok(Self { m, n })
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_fits(&self, image: &SonarImage) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::param("block_shape", "m and n must be at least 1"));
        }
        if self.m > image.height || self.n > image.width {
            return Err(Error::Bounds {
                requested: format!("block {}x{}", self.m, self.n),
                available: format!("image {}x{}", image.height, image.width),
            });
        }
        Ok(())
    }
}

/// A sub-image copied out of a source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub shape: BlockShape,
    /// (row, col) of the top-left pixel in the source image.
    pub origin: (usize, usize),
    pub pixels: Vec<f64>,
    /// Class inherited from the source image, if known.
    pub label: Option<usize>,
}

impl Block {
    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }
}

/// Row-major flattened block, optionally unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub values: Vec<f64>,
    pub norm_applied: bool,
}

impl BlockVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn read_token<'a>(bytes: &'a [u8], pos: &mut usize, field: &'static str) -> Result<&'a [u8]> {
    // Skip whitespace and `#` comments up to the next token.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(field, "unexpected end of header"));
    }
    Ok(&bytes[start..*pos])
}

fn read_number(bytes: &[u8], pos: &mut usize, field: &'static str) -> Result<usize> {
    let token = read_token(bytes, pos, field)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| {
            Error::format(
                field,
                format!(
                    "expected an unsigned integer, found {:?}",
                    String::from_utf8_lossy(token)
                ),
            )
        })
}

/// Parses a binary (`P5`) or ASCII (`P2`) PGM with maxval at most 255.
pub fn load_pgm(bytes: &[u8]) -> Result<SonarImage> {
    if bytes.len() < 2 {
        return Err(Error::format("magic", "file shorter than the magic number"));
    }
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::format(
                "magic",
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let mut pos = 2;
    let width = read_number(bytes, &mut pos, "width")?;
    let height = read_number(bytes, &mut pos, "height")?;
    let maxval = read_number(bytes, &mut pos, "maxval")?;
    if width == 0 {
        return Err(Error::format("width", "must be at least 1"));
    }
    if height == 0 {
        return Err(Error::format("height", "must be at least 1"));
    }
    if maxval == 0 {
        return Err(Error::format("maxval", "must be positive"));
    }
    if maxval > 255 {
        return Err(Error::format("maxval", format!("{maxval} exceeds 255")));
    }
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::format("payload", "missing separator after maxval"));
        }
        pos += 1;
        let payload = &bytes[pos..];
        if payload.len() < count {
            return Err(Error::format(
                "payload",
                format!("expected {count} bytes, found {}", payload.len()),
            ));
        }
        for &b in &payload[..count] {
            if b as usize > maxval {
                return Err(Error::format(
                    "payload",
                    format!("sample {b} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(b as f64 * scale);
        }
    } else {
        for _ in 0..count {
            let v = read_number(bytes, &mut pos, "payload")?;
            if v > maxval {
                return Err(Error::format(
                    "payload",
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(v as f64 * scale);
        }
    }
    SonarImage::new(width, height, pixels)
}

/// Encodes as binary PGM with maxval 255.
pub fn save_pgm(image: &SonarImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(
        image
            .pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// Copies the `shape` sub-grid whose top-left corner is `origin`.
pub fn extract_block(
    image: &SonarImage,
    origin: (usize, usize),
    shape: BlockShape,
) -> Result<Block> {
    shape.check_fits(image)?;
    let (row, col) = origin;
    if row + shape.m > image.height || col + shape.n > image.width {
        return Err(Error::Bounds {
            requested: format!(
                "rows {}..{}, cols {}..{}",
                row,
                row + shape.m,
                col,
                col + shape.n
            ),
            available: format!("image {}x{}", image.height, image.width),
        });
    }
    let mut pixels = Vec::with_capacity(shape.len());
    for r in row..row + shape.m {
        let start = r * image.width + col;
        pixels.extend_from_slice(&image.pixels[start..start + shape.n]);
    }
    Ok(Block {
        shape,
        origin,
        pixels,
        label: None,
    })
}

/// Draws `count` blocks with origins uniform over every valid position (with replacement).
pub fn sample_blocks(
    image: &SonarImage,
    count: usize,
    shape: BlockShape,
    seed: u64,
) -> Result<Vec<Block>> {
    if count == 0 {
        return Err(Error::param("count", "at least one block must be sampled"));
    }
    let mut sampler = OriginSampler::new(image, shape, seed)?;
    (0..count)
        .map(|_| extract_block(image, sampler.next_origin(), shape))
        .collect()
}

/// Seeded stream of uniformly distributed valid block origins.
#[derive(Debug, Clone)]
pub struct OriginSampler {
    rows: usize,
    cols: usize,
    rng: SplitMix64,
}

impl OriginSampler {
    pub fn new(image: &SonarImage, shape: BlockShape, seed: u64) -> Result<Self> {
        shape.check_fits(image)?;
        Ok(Self {
            rows: image.height - shape.m + 1,
            cols: image.width - shape.n + 1,
            rng: SplitMix64::new(seed),
        })
    }

    pub fn next_origin(&mut self) -> (usize, usize) {
        let row = self.rng.below(self.rows);
        let col = self.rng.below(self.cols);
        (row, col)
    }
}

/// All blocks whose origins lie on the `(stride_r, stride_c)` lattice, row-major.
pub fn grid_blocks(
    image: &SonarImage,
    shape: BlockShape,
    stride: (usize, usize),
) -> Result<Vec<Block>> {
    shape.check_fits(image)?;
    let (sr, sc) = stride;
    if sr == 0 || sc == 0 {
        return Err(Error::param(
            "stride",
            "must be at least 1 in both directions",
        ));
    }
    let mut blocks = Vec::new();
    for row in (0..=image.height - shape.m).step_by(sr) {
        for col in (0..=image.width - shape.n).step_by(sc) {
            blocks.push(extract_block(image, (row, col), shape)?);
        }
    }
    Ok(blocks)
}

/// Flattens row-major and scales to unit ℓ2 norm.
pub fn vectorize(block: &Block) -> Result<BlockVector> {
    let norm = block.pixels.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateBlock {
            row: block.origin.0,
            col: block.origin.1,
        });
    }
    Ok(BlockVector {
        values: block.pixels.iter().map(|p| p / norm).collect(),
        norm_applied: true,
    })
}

/// Sets each pixel to 0 or 1 (equal odds) with probability `density`.
pub fn add_salt_pepper(image: &SonarImage, density: f64, seed: u64) -> Result<SonarImage> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::param("density", format!("{density} outside [0, 1]")));
    }
    let mut rng = SplitMix64::new(seed);
    let pixels = image
        .pixels
        .iter()
        .map(|&p| {
            // Both draws happen for every pixel so the mask is paired across densities.
            let hit = rng.next_f64() < density;
            let salt = rng.next_u64() >> 63 == 1;
            match (hit, salt) {
                (false, _) => p,
                (true, true) => 1.0,
                (true, false) => 0.0,
            }
        })
        .collect();
    Ok(SonarImage {
        width: image.width,
        height: image.height,
        pixels,
    })
}
