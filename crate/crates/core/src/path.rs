//! Controlled paths: continuous interpolants of irregularly sampled series.
//!
//! A path has `d_x + 1` channels. Channel 0 is time rescaled to `[0, 1]`;
//! channels `1..=d_x` interpolate the (gap-filled) observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample: timestamps, an `n x d_x` value grid, and its observation mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrregularSeries {
    pub times: Vec<f64>,
    /// Row-major `n x d_x`.
    pub values: Vec<f64>,
    /// Row-major `n x d_x`, `true` where observed.
    pub mask: Vec<bool>,
    pub n_channels: usize,
    pub label: Option<usize>,
}

impl IrregularSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        mask: Vec<bool>,
        n_channels: usize,
        label: Option<usize>,
    ) -> Result<Self> {
        let s = Self { times, values, mask, n_channels, label };
        s.validate()?;
        Ok(s)
    }

    /// Fully observed series.
    pub fn dense(times: Vec<f64>, values: Vec<f64>, n_channels: usize, label: Option<usize>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(times, values, mask, n_channels, label)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.n_channels + c]
    }

    pub fn observed(&self, i: usize, c: usize) -> bool {
        self.mask[i * self.n_channels + c]
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 || self.n_channels == 0 {
            return Err(Error::InvalidArgument("series needs at least one time and one channel".into()));
        }
        if self.values.len() != n * self.n_channels || self.mask.len() != n * self.n_channels {
            return Err(Error::Shape(format!(
                "series with {n} times and {} channels has {} values and {} mask entries",
                self.n_channels,
                self.values.len(),
                self.mask.len()
            )));
        }
        if self.times.iter().any(|t| !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be finite and strictly increasing".into()));
        }
        for c in 0..self.n_channels {
            if !(0..n).any(|i| self.observed(i, c)) {
                return Err(Error::EmptyChannel { channel: c });
            }
        }
        Ok(())
    }
}

/// Interpolation scheme between knots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathScheme {
    Linear,
    Rectilinear,
    NaturalCubic,
    HermiteCubicBackward,
}

/// Fills masked cells: linear between observed neighbours, constant
/// extension before the first and after the last observation.
pub fn fill_missing(series: &IrregularSeries) -> Result<Vec<f64>> {
    let (n, d) = (series.len(), series.n_channels);
    let mut out = vec![0.0; n * d];
    for c in 0..d {
        let obs: Vec<usize> = (0..n).filter(|&i| series.observed(i, c)).collect();
        if obs.is_empty() {
            return Err(Error::EmptyChannel { channel: c });
        }
        let (first, last) = (obs[0], *obs.last().expect("non-empty"));
        let mut next = 0;
        for i in 0..n {
            let v = if i <= first {
                series.value(first, c)
            } else if i >= last {
                series.value(last, c)
            } else {
                while obs[next + 1] < i {
                    next += 1;
                }
                let (a, b) = (obs[next], obs[next + 1]);
                if a == i {
                    series.value(i, c)
                } else if b == i {
                    series.value(i, c)
                } else {
                    let (ta, tb) = (series.times[a], series.times[b]);
                    let w = (series.times[i] - ta) / (tb - ta);
                    series.value(a, c) + w * (series.value(b, c) - series.value(a, c))
                }
            };
            out[i * d + c] = v;
        }
    }
    Ok(out)
}

/// Piecewise cubic in local time `s = t - breaks[j]` on each segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlledPath {
    pub scheme: PathScheme,
    /// Original observation times.
    pub knots: Vec<f64>,
    /// Segment boundaries (equal to `knots` except for rectilinear paths).
    breaks: Vec<f64>,
    /// `coeffs[channel][segment] = [a, b, c, d]`.
    coeffs: Vec<Vec<[f64; 4]>>,
}

impl ControlledPath {
    pub fn build(series: &IrregularSeries, scheme: PathScheme) -> Result<Self> {
        series.validate()?;
        let n = series.len();
        if n < 2 {
            return Err(Error::TooFewKnots(n));
        }
        let filled = fill_missing(series)?;
        let d = series.n_channels;
        let t = &series.times;
        let (t0, tn) = (t[0], t[n - 1]);
        let time_channel: Vec<f64> = t.iter().map(|&tk| (tk - t0) / (tn - t0)).collect();
        let channel = |c: usize| -> Vec<f64> { (0..n).map(|i| filled[i * d + c]).collect() };

        let (breaks, coeffs) = match scheme {
            PathScheme::Rectilinear => {
                let mut breaks = Vec::with_capacity(2 * n - 1);
                for k in 0..n - 1 {
                    breaks.push(t[k]);
                    breaks.push(0.5 * (t[k] + t[k + 1]));
                }
                breaks.push(t[n - 1]);
                let mut coeffs = vec![rectilinear(&breaks, &time_channel, true)];
                for c in 0..d {
                    coeffs.push(rectilinear(&breaks, &channel(c), false));
                }
                (breaks, coeffs)
            }
            _ => {
                let mut coeffs = vec![linear(t, &time_channel)];
                for c in 0..d {
                    let y = channel(c);
                    coeffs.push(match scheme {
                        PathScheme::Linear => linear(t, &y),
                        PathScheme::NaturalCubic => natural_cubic(t, &y),
                        PathScheme::HermiteCubicBackward => hermite_backward(t, &y),
                        PathScheme::Rectilinear => unreachable!(),
                    });
                }
                (t.clone(), coeffs)
            }
        };
        Ok(Self { scheme, knots: t.clone(), breaks, coeffs })
    }

    /// A path on `[0, 1]` whose data channels are identically zero.
    pub fn flat(n_channels: usize) -> Self {
        let series = IrregularSeries::dense(vec![0.0, 1.0], vec![0.0; 2 * n_channels], n_channels, None)
            .expect("flat series is valid");
        Self::build(&series, PathScheme::Linear).expect("two knots")
    }

    /// Number of channels including the time channel.
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().expect("at least two knots")
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(self.start(), self.end());
        let last = self.breaks.len() - 2;
        // Index of the last break <= t, with the right segment at interior knots.
        let j = self.breaks.partition_point(|&b| b <= t).saturating_sub(1).min(last);
        (j, t - self.breaks[j])
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (j, s) = self.locate(t);
        self.coeffs.iter().map(|c| {
            let [a, b, c2, d] = c[j];
            a + s * (b + s * (c2 + s * d))
        }).collect()
    }

    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let (j, s) = self.locate(t);
        self.coeffs.iter().map(|c| {
            let [_, b, c2, d] = c[j];
            b + s * (2.0 * c2 + 3.0 * s * d)
        }).collect()
    }

    pub fn second_deriv(&self, t: f64) -> Vec<f64> {
        let (j, s) = self.locate(t);
        self.coeffs.iter().map(|c| {
            let [_, _, c2, d] = c[j];
            2.0 * c2 + 6.0 * s * d
        }).collect()
    }
}

fn linear(t: &[f64], y: &[f64]) -> Vec<[f64; 4]> {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| [yw[0], (yw[1] - yw[0]) / (tw[1] - tw[0]), 0.0, 0.0])
        .collect()
}

/// On `[t_k, mid]` time advances and values hold; on `[mid, t_{k+1}]` time
/// holds and values move.
fn rectilinear(breaks: &[f64], y: &[f64], is_time: bool) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(breaks.len() - 1);
    for k in 0..y.len() - 1 {
        let h = 0.5 * (breaks[2 * k + 2] - breaks[2 * k]);
        let slope = (y[k + 1] - y[k]) / h;
        if is_time {
            out.push([y[k], slope, 0.0, 0.0]);
            out.push([y[k + 1], 0.0, 0.0, 0.0]);
        } else {
            out.push([y[k], 0.0, 0.0, 0.0]);
            out.push([y[k], slope, 0.0, 0.0]);
        }
    }
    out
}

/// Second derivatives of the natural cubic spline (zero at both ends).
pub fn natural_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // Thomas algorithm on the interior unknowns m[1..n-1].
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        upper[i] = h[i + 1];
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..k {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

fn natural_cubic(t: &[f64], y: &[f64]) -> Vec<[f64; 4]> {
    let m = natural_second_derivatives(t, y);
    (0..t.len() - 1)
        .map(|k| {
            let h = t[k + 1] - t[k];
            let b = (y[k + 1] - y[k]) / h - h * (2.0 * m[k] + m[k + 1]) / 6.0;
            [y[k], b, m[k] / 2.0, (m[k + 1] - m[k]) / (6.0 * h)]
        })
        .collect()
}

fn hermite_backward(t: &[f64], y: &[f64]) -> Vec<[f64; 4]> {
    let n = t.len();
    let mut slope = vec![0.0; n];
    for k in 1..n {
        slope[k] = (y[k] - y[k - 1]) / (t[k] - t[k - 1]);
    }
    (0..n - 1)
        .map(|k| {
            let h = t[k + 1] - t[k];
            let delta = (y[k + 1] - y[k]) / h;
            let c = (3.0 * delta - 2.0 * slope[k] - slope[k + 1]) / h;
            let d = (slope[k] + slope[k + 1] - 2.0 * delta) / (h * h);
            [y[k], slope[k], c, d]
        })
        .collect()
}
