//! Raster containers and the sampling/gradient/pyramid machinery that
//! warping, losses and the pose solver build on.
//!
//! All types are immutable after construction and every operation is
//! pure, so rasters can be shared freely across threads.

use crate::error::{Error, Result};

/// Luma weights for the color-to-grayscale conversion used by the
/// photometric paths (BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Unit tag carried by every [`ScalarMap`]; consumers check it before
/// mixing rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Meters,
    Normalized,
    Probability,
    Pixels,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Meters => "meters",
            Units::Normalized => "normalized",
            Units::Probability => "probability",
            Units::Pixels => "pixels",
        }
    }
}

/// Dense intensity raster, row-major and channel-interleaved, values in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Domain(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Domain(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::Domain(
                "image intensities must be finite and in [0, 1]".into(),
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a per-pixel function of `(u, v)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Image::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    /// Grayscale view of the image; single-channel inputs are returned
    /// unchanged.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height);
        for px in self.data.chunks_exact(3) {
            let y = LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2];
            data.push(y.clamp(0.0, 1.0));
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear sample of one channel at a continuous coordinate.
    ///
    /// In-bounds means the whole interpolation support lies inside the
    /// image, i.e. `0 <= u <= width-1` and `0 <= v <= height-1`; sampling
    /// exactly on the far border reads the border pixel. Out-of-bounds
    /// returns `None`.
    pub fn sample_bilinear(&self, u: f64, v: f64, c: usize) -> Option<f64> {
        let f = self.footprint(u, v)?;
        let mut acc = 0.0;
        for i in 0..4 {
            acc += f.weights[i] * self.data[f.indices[i] * self.channels + c];
        }
        Some(acc)
    }

    /// Bilinear sample plus the analytic in-cell derivative of the
    /// interpolant with respect to `u` and `v`.
    pub fn sample_bilinear_with_grad(&self, u: f64, v: f64, c: usize) -> Option<(f64, f64, f64)> {
        let f = self.footprint(u, v)?;
        let p = |i: usize| self.data[f.indices[i] * self.channels + c];
        let (a, b, cc, d) = (p(0), p(1), p(2), p(3));
        let (fu, fv) = (f.fu, f.fv);
        let value = (1.0 - fu) * (1.0 - fv) * a + fu * (1.0 - fv) * b + (1.0 - fu) * fv * cc
            + fu * fv * d;
        let du = (1.0 - fv) * (b - a) + fv * (d - cc);
        let dv = (1.0 - fu) * (cc - a) + fu * (d - b);
        Some((value, du, dv))
    }

    /// The four pixel indices and weights a bilinear sample reads, used by
    /// the adjoint (scatter) paths of the loss gradients.
    pub fn footprint(&self, u: f64, v: f64) -> Option<BilinearFootprint> {
        bilinear_footprint(self.width, self.height, u, v)
    }

    /// Multi-resolution pyramid: level 0 is the input and each level is a
    /// 2x box-downsample of the previous one (odd trailing rows/columns
    /// are dropped).
    pub fn pyramid(&self, levels: usize) -> Result<Vec<Image>> {
        if levels < 1 {
            return Err(Error::Domain("pyramid needs at least one level".into()));
        }
        let mut out = Vec::with_capacity(levels);
        out.push(self.clone());
        for _ in 1..levels {
            let prev = out.last().unwrap();
            if prev.width / 2 < 8 || prev.height / 2 < 8 {
                return Err(Error::TooSmall {
                    what: "pyramid level",
                    width: prev.width / 2,
                    height: prev.height / 2,
                    min_width: 8,
                    min_height: 8,
                });
            }
            out.push(prev.downsample_half());
        }
        Ok(out)
    }

    /// 2x2 box mean downsample.
    pub fn downsample_half(&self) -> Image {
        let w = self.width / 2;
        let h = self.height / 2;
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for v in 0..h {
            for u in 0..w {
                for ch in 0..c {
                    let s = self.get(2 * u, 2 * v, ch)
                        + self.get(2 * u + 1, 2 * v, ch)
                        + self.get(2 * u, 2 * v + 1, ch)
                        + self.get(2 * u + 1, 2 * v + 1, ch);
                    data.push(s * 0.25);
                }
            }
        }
        Image {
            width: w,
            height: h,
            channels: c,
            data,
        }
    }
}

/// Support of one bilinear sample: flat pixel indices (row-major, channel
/// 0) of the four corners `(u0,v0) (u1,v0) (u0,v1) (u1,v1)` with their
/// weights, plus the fractional offsets inside the cell.
#[derive(Debug, Clone, Copy)]
pub struct BilinearFootprint {
    pub indices: [usize; 4],
    pub weights: [f64; 4],
    pub fu: f64,
    pub fv: f64,
}

fn bilinear_footprint(width: usize, height: usize, u: f64, v: f64) -> Option<BilinearFootprint> {
    if width == 0 || height == 0 {
        return None;
    }
    let max_u = (width - 1) as f64;
    let max_v = (height - 1) as f64;
    if !u.is_finite() || !v.is_finite() || u < 0.0 || v < 0.0 || u > max_u || v > max_v {
        return None;
    }
    // Clamp the cell so a sample exactly on the far border reads the
    // border pixel with weight one.
    let u0 = (u.floor() as usize).min(width.saturating_sub(2));
    let v0 = (v.floor() as usize).min(height.saturating_sub(2));
    let u1 = (u0 + 1).min(width - 1);
    let v1 = (v0 + 1).min(height - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let idx = |uu: usize, vv: usize| vv * width + uu;
    Some(BilinearFootprint {
        indices: [idx(u0, v0), idx(u1, v0), idx(u0, v1), idx(u1, v1)],
        weights: [
            (1.0 - fu) * (1.0 - fv),
            fu * (1.0 - fv),
            (1.0 - fu) * fv,
            fu * fv,
        ],
        fu,
        fv,
    })
}

/// Single-channel raster with a units tag and a per-pixel validity
/// raster. Invalid pixels are excluded from every reduction in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    units: Units,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl ScalarMap {
    pub fn new(
        width: usize,
        height: usize,
        units: Units,
        data: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::Domain(format!(
                "scalar map buffers ({} values, {} flags) do not match {width}x{height}",
                data.len(),
                valid.len()
            )));
        }
        if data
            .iter()
            .zip(&valid)
            .any(|(value, &ok)| ok && !value.is_finite())
        {
            return Err(Error::Domain("valid scalar-map entries must be finite".into()));
        }
        Ok(ScalarMap {
            width,
            height,
            units,
            data,
            valid,
        })
    }

    /// All-valid constant map.
    pub fn filled(width: usize, height: usize, units: Units, value: f64) -> Self {
        ScalarMap {
            width,
            height,
            units,
            data: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        units: Units,
        f: impl Fn(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                match f(u, v) {
                    Some(x) => {
                        data.push(x);
                        valid.push(true);
                    }
                    None => {
                        data.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        ScalarMap {
            width,
            height,
            units,
            data,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn units(&self) -> Units {
        self.units
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    /// Raw value regardless of validity.
    #[inline]
    pub fn value_at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    /// Value if the pixel is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.data[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Checks the units tag, naming the consumer in the error.
    pub fn expect_units(&self, what: &'static str, units: Units) -> Result<()> {
        if self.units == units {
            Ok(())
        } else {
            Err(Error::UnitsMismatch {
                what,
                expected: units.name(),
                found: self.units.name(),
            })
        }
    }

    /// Validity-aware 2x2 downsample: the output pixel is the mean of the
    /// valid entries of its block, invalid when the whole block is.
    pub fn downsample_half_valid(&self) -> ScalarMap {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let mut sum = 0.0;
                let mut n = 0;
                for (du, dv) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (su, sv) = (2 * u + du, 2 * v + dv);
                    if self.is_valid(su, sv) {
                        sum += self.value_at(su, sv);
                        n += 1;
                    }
                }
                if n > 0 {
                    data.push(sum / n as f64);
                    valid.push(true);
                } else {
                    data.push(0.0);
                    valid.push(false);
                }
            }
        }
        ScalarMap {
            width: w,
            height: h,
            units: self.units,
            data,
            valid,
        }
    }

    /// Reinterprets the valid values as a single-channel image. Values
    /// must lie in `[0, 1]`; invalid pixels become zero.
    pub fn to_image(&self) -> Result<Image> {
        let data = self
            .data
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { v } else { 0.0 })
            .collect();
        Image::new(self.width, self.height, 1, data)
    }
}

/// Dense 2-vector raster of pixel displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    du: Vec<f64>,
    dv: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, du: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        if du.len() != width * height || dv.len() != width * height {
            return Err(Error::Domain(format!(
                "flow buffers ({}, {}) do not match {width}x{height}",
                du.len(),
                dv.len()
            )));
        }
        if !du.iter().chain(dv.iter()).all(|v| v.is_finite()) {
            return Err(Error::Domain("flow displacements must be finite".into()));
        }
        Ok(FlowField {
            width,
            height,
            du,
            dv,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            du: vec![0.0; width * height],
            dv: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn du(&self) -> &[f64] {
        &self.du
    }
    pub fn dv(&self) -> &[f64] {
        &self.dv
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> (f64, f64) {
        let i = v * self.width + u;
        (self.du[i], self.dv[i])
    }
}

/// Horizontal and vertical intensity derivatives of a single-channel
/// image: central differences in the interior, one-sided at the borders
/// (a zero border gradient would blank out the Jacobian there).
pub fn gradient(img: &Image) -> Result<(ScalarMap, ScalarMap)> {
    if img.channels() != 1 {
        return Err(Error::Domain(
            "gradient expects a single-channel image; convert with to_grayscale first".into(),
        ));
    }
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::TooSmall {
            what: "gradient input",
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let mut gu = Vec::with_capacity(w * h);
    let mut gv = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let du = if u == 0 {
                img.get(1, v, 0) - img.get(0, v, 0)
            } else if u == w - 1 {
                img.get(w - 1, v, 0) - img.get(w - 2, v, 0)
            } else {
                (img.get(u + 1, v, 0) - img.get(u - 1, v, 0)) * 0.5
            };
            let dv = if v == 0 {
                img.get(u, 1, 0) - img.get(u, 0, 0)
            } else if v == h - 1 {
                img.get(u, h - 1, 0) - img.get(u, h - 2, 0)
            } else {
                (img.get(u, v + 1, 0) - img.get(u, v - 1, 0)) * 0.5
            };
            gu.push(du);
            gv.push(dv);
        }
    }
    let all = vec![true; w * h];
    Ok((
        ScalarMap::new(w, h, Units::Normalized, gu, all.clone())?,
        ScalarMap::new(w, h, Units::Normalized, gv, all)?,
    ))
}
