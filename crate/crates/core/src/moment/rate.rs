use super::VolterraSolution;
use crate::error::{Error, Result};

/// Least-squares fit `ln M ≈ a + rate·t` over a trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSlopeFit {
    pub rate: f64,
    pub intercept: f64,
    /// RMS of the log residuals; large values mean the window has not
    /// reached the exponential regime.
    pub residual: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
}

pub const MIN_WINDOW_POINTS: usize = 20;
const BLOCKS: usize = 10;

fn line_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in t.iter().zip(y) {
        sxy += (a - mt) * (b - my);
        sxx += (a - mt) * (a - mt);
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mt;
    let rss: f64 = t
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - icpt - slope * a).powi(2))
        .sum();
    (slope, icpt, (rss / n).sqrt())
}

/// Fits the growth rate of `values` over the trailing `window` fraction of
/// the time span. A transient prefix is discarded: leading exact zeros, and
/// leading blocks whose local slope differs from the fitted one by more than
/// `0.1|rate| + 1e-3`.
pub fn fit_log_slope(times: &[f64], values: &[f64], window: f64) -> Result<LogSlopeFit> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Window("series too short".into()));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Window(format!("window fraction {window} outside (0, 1]")));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let start = t1 - window * (t1 - t0);
    let mut idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= start - 1e-12).collect();
    let skip = idx.iter().take_while(|&&i| values[i] == 0.0).count();
    idx.drain(..skip);
    if idx.iter().any(|&i| !(values[i] > 0.0 && values[i].is_finite())) {
        return Err(Error::Window(
            "moment is zero or non-finite inside the fit window".into(),
        ));
    }
    let mut fit = None;
    for _ in 0..3 {
        if idx.len() < MIN_WINDOW_POINTS {
            return Err(Error::Window(format!(
                "{} usable points in the window, need {MIN_WINDOW_POINTS}",
                idx.len()
            )));
        }
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| values[i].ln()).collect();
        let (slope, icpt, res) = line_fit(&t, &y);
        fit = Some((slope, icpt, res, t[0], t[t.len() - 1], t.len()));
        let block = t.len() / BLOCKS;
        if block < 3 {
            break;
        }
        let tol = 0.1 * slope.abs() + 1e-3;
        let local: Vec<f64> = (0..BLOCKS)
            .map(|b| {
                let r = b * block..(b + 1) * block;
                line_fit(&t[r.clone()], &y[r]).0
            })
            .collect();
        let first_good = (0..BLOCKS)
            .find(|&b| local[b..].iter().all(|s| (s - slope).abs() <= tol))
            .unwrap_or(BLOCKS - 1);
        if first_good == 0 {
            break;
        }
        idx.drain(..first_good * block);
    }
    let (rate, intercept, residual, window_start, window_end, points) =
        fit.expect("loop runs at least once");
    Ok(LogSlopeFit {
        rate,
        intercept,
        residual,
        window_start,
        window_end,
        points,
    })
}

/// Growth rate of `M(·, x)` at the grid node nearest `x`.
pub fn lyapunov_rate(sol: &VolterraSolution, x: f64, window: f64) -> Result<LogSlopeFit> {
    fit_log_slope(&sol.times, &sol.series_at(x), window)
}
