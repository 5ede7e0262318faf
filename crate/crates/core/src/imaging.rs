//! Deblurring under Poisson noise: a matrix-free 7×7 moving-average blur,
//! binary PGM I/O, a built-in neuron phantom and the restoration driver.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::harness::{sample_poisson, GridPoint, Init};
use crate::linop::LinearOperator;
use crate::losses::PoissonModel;
use crate::shrink::ExtDivParams;
use crate::metrics::psnr;
use crate::par;
use crate::solver::{solve, Method, SolveOutput, SolverConfig};

/// Intensity that PGM value 255 maps to, and the PSNR peak.
pub const PEAK: f64 = 30.0;

/// Half-width of the blur window (7×7).
pub const KERNEL_HALF: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param(format!("image must be non-empty, got {width}x{height}")));
        }
        check_len(width * height, pixels.len())?;
        check_finite("pixels", &pixels)?;
        if let Some(i) = pixels.iter().position(|&p| p < 0.0) {
            return Err(Error::Domain(format!("pixel {i} = {} is negative", pixels[i])));
        }
        Ok(Self { width, height, pixels })
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

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Half-sample symmetric extension: `… c b a | a b c …`.
    #[default]
    Reflect,
    /// Pixels outside the image are zero.
    Zero,
}

/// Index taps of a 1-D moving average with the given boundary. Entry `i`
/// lists `(source, weight)` with duplicates merged.
fn taps_1d(len: usize, half: usize, boundary: Boundary) -> Vec<Vec<(usize, f64)>> {
    let w = 1.0 / (2 * half + 1) as f64;
    (0..len)
        .map(|i| {
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity(2 * half + 1);
            for d in -(half as isize)..=half as isize {
                let j = i as isize + d;
                let src = match boundary {
                    Boundary::Zero if j < 0 || j >= len as isize => continue,
                    Boundary::Zero => j as usize,
                    Boundary::Reflect => reflect(j, len),
                };
                match taps.iter_mut().find(|t| t.0 == src) {
                    Some(t) => t.1 += w,
                    None => taps.push((src, w)),
                }
            }
            taps.sort_by_key(|t| t.0);
            taps
        })
        .collect()
}

fn reflect(mut j: isize, len: usize) -> usize {
    let n = len as isize;
    loop {
        if j < 0 {
            j = -j - 1;
        } else if j >= n {
            j = 2 * n - 1 - j;
        } else {
            return j as usize;
        }
    }
}

/// Transposes a tap list so the adjoint is also a gather.
fn transpose_taps(taps: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); taps.len()];
    for (i, row) in taps.iter().enumerate() {
        for &(j, w) in row {
            out[j].push((i, w));
        }
    }
    out
}

/// Separable uniform 7×7 blur on a `width × height` row-major image.
#[derive(Debug, Clone)]
pub struct BlurOperator {
    width: usize,
    height: usize,
    boundary: Boundary,
    h: Vec<Vec<(usize, f64)>>,
    v: Vec<Vec<(usize, f64)>>,
    ht: Vec<Vec<(usize, f64)>>,
    vt: Vec<Vec<(usize, f64)>>,
}

impl BlurOperator {
    pub fn new(width: usize, height: usize, boundary: Boundary) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param(format!("image must be non-empty, got {width}x{height}")));
        }
        let h = taps_1d(width, KERNEL_HALF, boundary);
        let v = taps_1d(height, KERNEL_HALF, boundary);
        let ht = transpose_taps(&h);
        let vt = transpose_taps(&v);
        Ok(Self { width, height, boundary, h, v, ht, vt })
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn separable(
        &self,
        horiz: &[Vec<(usize, f64)>],
        vert: &[Vec<(usize, f64)>],
        x: &[f64],
        out: &mut [f64],
    ) {
        let w = self.width;
        let mut tmp = vec![0.0; x.len()];
        par::for_each_row(&mut tmp, w, |r, row| {
            let src = &x[r * w..(r + 1) * w];
            for (o, taps) in row.iter_mut().zip(horiz) {
                *o = taps.iter().map(|&(j, c)| c * src[j]).sum();
            }
        });
        par::for_each_row(out, w, |r, row| {
            row.fill(0.0);
            for &(i, c) in &vert[r] {
                for (o, t) in row.iter_mut().zip(&tmp[i * w..(i + 1) * w]) {
                    *o += c * t;
                }
            }
        });
    }
}

impl LinearOperator for BlurOperator {
    fn rows(&self) -> usize {
        self.width * self.height
    }

    fn cols(&self) -> usize {
        self.width * self.height
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.separable(&self.h, &self.v, x, out);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.separable(&self.ht, &self.vt, y, out);
    }

    fn min_entry(&self) -> f64 {
        0.0
    }
}

pub fn blur_apply(op: &BlurOperator, x: &[f64]) -> Result<Vec<f64>> {
    op.apply(x)
}

pub fn blur_adjoint(op: &BlurOperator, y: &[f64]) -> Result<Vec<f64>> {
    op.adjoint(y)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parses a binary PGM (P5, maxval 255). Values are mapped linearly so that
/// 255 becomes [`PEAK`].
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(format_err(format!("expected binary PGM (P5), found {magic:?}")));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| format_err(format!("PGM {what} is not a number")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(format_err(format!("maxval must be 255, found {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(format_err("PGM has zero size"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let n = width * height;
    if bytes.len() < start + n {
        return Err(format_err(format!(
            "PGM raster too short: need {n} bytes, have {}",
            bytes.len().saturating_sub(start)
        )));
    }
    let pixels = bytes[start..start + n]
        .iter()
        .map(|&b| b as f64 * PEAK / 255.0)
        .collect();
    GrayImage::new(width, height, pixels)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&fs::read(path)?)
}

/// Encodes as P5; intensities are mapped back by `255 / PEAK`, rounded and
/// clamped to `0..=255`.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(
        image
            .pixels
            .iter()
            .map(|&p| (p * 255.0 / PEAK).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(image))?;
    Ok(())
}

/// 64×64 neuron-like phantom on a zero background: a soma, a thin dendrite
/// leaving it, and a mushroom spine (neck plus round head) on the dendrite.
/// Peak intensity is [`PEAK`].
pub fn neuron_phantom() -> GrayImage {
    let (w, h) = (64usize, 64usize);
    let mut px = vec![0.0; w * h];
    let dist2 = |x: f64, y: f64, cx: f64, cy: f64| (x - cx).powi(2) + (y - cy).powi(2);
    for yi in 0..h {
        for xi in 0..w {
            let (x, y) = (xi as f64, yi as f64);
            let mut v: f64 = 0.0;
            // soma
            if dist2(x, y, 18.0, 34.0) <= 8.5f64.powi(2) {
                v = v.max(PEAK);
            }
            // dendrite: gently sloped band from the soma to the right edge
            let centre = 34.0 - 0.15 * (x - 18.0);
            if (18.0..=60.0).contains(&x) && (y - centre).abs() <= 1.2 {
                v = v.max(0.6 * PEAK);
            }
            // spine neck rising from the dendrite at x = 42
            let base = 34.0 - 0.15 * (42.0 - 18.0);
            if (x - 42.0).abs() <= 0.6 && y < base && y >= base - 9.0 {
                v = v.max(0.4 * PEAK);
            }
            // spine head
            if dist2(x, y, 42.0, base - 12.0) <= 3.5f64.powi(2) {
                v = v.max(0.8 * PEAK);
            }
            px[yi * w + xi] = v;
        }
    }
    GrayImage { width: w, height: h, pixels: px }
}

/// Forward model and noise settings of a restoration experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestoreSetup {
    pub boundary: Boundary,
    /// Constant background added before Poisson sampling (and in the model).
    pub background: f64,
    pub peak: f64,
}

impl Default for RestoreSetup {
    fn default() -> Self {
        Self { boundary: Boundary::Reflect, background: 0.0, peak: PEAK }
    }
}

/// Ground truth, its blurred-and-noisy observation and the fitted model.
#[derive(Debug, Clone)]
pub struct ImagingProblem {
    pub truth: GrayImage,
    pub observed: GrayImage,
    pub model: PoissonModel<BlurOperator>,
    pub setup: RestoreSetup,
}

impl ImagingProblem {
    pub fn new(truth: &GrayImage, setup: RestoreSetup, seed: u64) -> Result<Self> {
        if !(setup.background >= 0.0 && setup.background.is_finite()) {
            return Err(Error::Param(format!("background must be >= 0, got {}", setup.background)));
        }
        let op = BlurOperator::new(truth.width, truth.height, setup.boundary)?;
        let mut mean = op.apply(&truth.pixels)?;
        mean.iter_mut().for_each(|t| *t += setup.background);
        let b = sample_poisson(&mean, seed)?;
        let observed = GrayImage::new(truth.width, truth.height, b.clone())?;
        let background = vec![setup.background; b.len()];
        let model = PoissonModel::new(op, b, background)?;
        Ok(Self { truth: truth.clone(), observed, model, setup })
    }

    /// PSNR of the raw observation against the truth.
    pub fn observed_psnr(&self) -> Result<f64> {
        psnr(self.observed.pixels(), self.truth.pixels(), self.setup.peak)
    }

    /// Solver settings for a grid point, starting from the observation.
    pub fn config(&self, method: Method, point: &GridPoint, max_iter: usize, tol: f64) -> Result<SolverConfig> {
        point.config(method, &self.model, Init::Observed, max_iter, tol)
    }

    /// Runs every point of `grid` and keeps the highest PSNR; ties go to the
    /// earlier point. Points whose solve fails are skipped.
    pub fn best_of(
        &self,
        method: Method,
        grid: &[GridPoint],
        max_iter: usize,
        tol: f64,
    ) -> Result<Restoration> {
        let runs = par::map(grid, |g| {
            let cfg = self.config(method, g, max_iter, tol)?;
            self.run(&cfg).map(|(image, report, _)| (image, report))
        });
        let mut best: Option<Restoration> = None;
        let mut last_err = None;
        let mut failed = 0;
        for (point, run) in grid.iter().zip(runs) {
            match run {
                Ok((image, report)) => {
                    if best.as_ref().is_none_or(|b| report.psnr > b.report.psnr) {
                        best = Some(Restoration { point: *point, image, report, failed_points: 0 });
                    }
                }
                Err(e) => {
                    failed += 1;
                    last_err = Some(e);
                }
            }
        }
        let mut best = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Param("empty grid".into())))?;
        best.failed_points = failed;
        Ok(best)
    }

    pub fn run(&self, config: &SolverConfig) -> Result<(GrayImage, RestoreReport, SolveOutput)> {
        let out = solve(config, &self.model, None)?;
        let image = GrayImage::new(self.truth.width, self.truth.height, out.x.clone())?;
        let report = RestoreReport {
            method: config.method,
            psnr: psnr(&out.x, self.truth.pixels(), self.setup.peak)?,
            observed_psnr: self.observed_psnr()?,
            iterations: out.iterations,
            converged: out.converged,
            lambda: out.lambda,
        };
        Ok((image, report, out))
    }
}

/// Step multipliers searched in restoration.
pub const IMAGING_LAMBDA_FACTORS: [f64; 3] = [0.1, 0.3, 1.0];

/// Default restoration grid for `method`. Centers sit near the object
/// intensities: the operator pulls values below `a/κ` to zero and snaps
/// values near `a` onto it, so small centers leave the noise untouched.
pub fn imaging_grid(method: Method) -> Vec<GridPoint> {
    let mut pts = Vec::new();
    match method {
        Method::ProposedA0 => pts.extend(IMAGING_LAMBDA_FACTORS.iter().map(|&l| GridPoint::step(l))),
        Method::RklL1 => {
            for &l in &IMAGING_LAMBDA_FACTORS {
                pts.extend([0.1, 0.3, 1.0, 3.0].iter().map(|&e| GridPoint::l1(l, e)));
            }
        }
        // The forward-KL bound 1/‖b‖₁ is tiny here, so larger multiples are tried.
        Method::FklL1 => {
            for l in [1.0, 10.0, 100.0] {
                pts.extend([0.01, 0.1, 1.0].iter().map(|&e| GridPoint::l1(l, e)));
            }
        }
        Method::Proposed => {
            for &l in &IMAGING_LAMBDA_FACTORS {
                for w in [2.0, 8.0] {
                    let eta1 = 0.9 * ExtDivParams::max_nonnegative_eta1(w);
                    pts.extend([15.0, 20.0, 25.0, 30.0].iter().map(|&a| GridPoint::ext_div(l, w, eta1, a)));
                }
            }
        }
    }
    pts
}

/// Best restoration found by [`ImagingProblem::best_of`].
#[derive(Debug, Clone)]
pub struct Restoration {
    pub point: GridPoint,
    pub image: GrayImage,
    pub report: RestoreReport,
    /// Grid points whose solve returned an error.
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub method: Method,
    pub psnr: f64,
    pub observed_psnr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

/// Blurs `image`, corrupts it with Poisson noise drawn from `seed`, and
/// restores it with `config` under the default setup.
pub fn restore(image: &GrayImage, config: &SolverConfig, seed: u64) -> Result<(GrayImage, RestoreReport)> {
    let problem = ImagingProblem::new(image, RestoreSetup::default(), seed)?;
    problem.run(config).map(|(img, rep, _)| (img, rep))
}
