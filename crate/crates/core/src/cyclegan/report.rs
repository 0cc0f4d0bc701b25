use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::losses::GeneratorLosses;

/// Header of the per-step loss-curve CSV.
pub const LOSS_CSV_HEADER: &str = "step,dA_real,dA_fake,dB_real,dB_fake,g_AtoB,g_BtoA,adv,cyc_f,cyc_b,id";

/// Losses of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub d_a_real: f64,
    pub d_a_fake: f64,
    pub d_b_real: f64,
    pub d_b_fake: f64,
    pub g_a_to_b: GeneratorLosses,
    pub g_b_to_a: GeneratorLosses,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.d_a_real,
            self.d_a_fake,
            self.d_b_real,
            self.d_b_fake,
            self.g_a_to_b.total,
            self.g_b_to_a.total,
            self.g_a_to_b.adv,
            self.g_b_to_a.adv,
            self.g_a_to_b.cycle_fwd,
            self.g_a_to_b.cycle_bwd,
            self.g_a_to_b.identity,
            self.g_b_to_a.identity,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// `>STEP, dA[real,fake] dB[real,fake] g[AtoB,BtoA]` with three decimals.
    pub fn log_line(&self) -> String {
        format!(
            ">{}, dA[{:.3},{:.3}] dB[{:.3},{:.3}] g[{:.3},{:.3}]",
            self.step,
            self.d_a_real,
            self.d_a_fake,
            self.d_b_real,
            self.d_b_fake,
            self.g_a_to_b.total,
            self.g_b_to_a.total
        )
    }

    /// One CSV row; the component columns break down the A→B generator.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let g = &self.g_a_to_b;
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.d_a_real,
            self.d_a_fake,
            self.d_b_real,
            self.d_b_fake,
            g.total,
            self.g_b_to_a.total,
            g.adv,
            g.cycle_fwd,
            g.cycle_bwd,
            g.identity
        )
        .expect("writing to a String cannot fail");
        s
    }
}

/// Moving average over a trailing window, used to judge loss curves.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gl(total: f64) -> GeneratorLosses {
        GeneratorLosses { total, ..Default::default() }
    }

    #[test]
    fn log_line_matches_the_training_log_layout() {
        let r = LossReport {
            step: 2711,
            d_a_real: 0.12,
            d_a_fake: 0.17,
            d_b_real: 0.009,
            d_b_fake: 0.0091,
            g_a_to_b: gl(2.689),
            g_b_to_a: gl(2.566),
        };
        assert_eq!(r.log_line(), ">2711, dA[0.120,0.170] dB[0.009,0.009] g[2.689,2.566]");
    }

    #[test]
    fn csv_row_has_one_field_per_header_column() {
        let r = LossReport {
            step: 1,
            d_a_real: 0.5,
            d_a_fake: 0.25,
            d_b_real: 0.0,
            d_b_fake: 1.0,
            g_a_to_b: GeneratorLosses { adv: 0.3, cycle_fwd: 0.1, cycle_bwd: 0.1, identity: 0.05, total: 2.55 },
            g_b_to_a: gl(3.0),
        };
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), LOSS_CSV_HEADER.split(',').count());
        assert_eq!(row, "1,0.5,0.25,0,1,2.55,3,0.3,0.1,0.1,0.05");
    }

    #[test]
    fn smoothing_averages_the_trailing_window() {
        let s = smoothed(&[1.0, 2.0, 3.0, 4.0, 5.0], 2);
        assert_eq!(s, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
    }
}
