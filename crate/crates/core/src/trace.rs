//! Per-seed regret traces and their CSV form.

use std::fmt::Write as _;

/// Formats a float with 17 significant digits, independent of locale.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV-serializable record of a trace.
pub trait TraceRecord {
    /// Column names after the leading `seed` column.
    const COLUMNS: &'static [&'static str];
    fn step(&self) -> u64;
    fn cumulative(&self) -> f64;
    /// Cell values matching [`Self::COLUMNS`].
    fn cells(&self) -> Vec<String>;
}

/// Records of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace<R> {
    pub seed: u64,
    pub records: Vec<R>,
}

/// Final cumulative regret and mean per-step regret over each quarter of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub final_cumulative: f64,
    pub quartile_means: [f64; 4],
}

impl<R: TraceRecord> RegretTrace<R> {
    pub fn final_cumulative(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative())
    }

    /// Cumulative regret per step, in step order.
    pub fn cumulative_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cumulative()).collect()
    }

    pub fn summary(&self) -> TraceSummary {
        let n = self.records.len();
        let mut quartile_means = [0.0; 4];
        if n > 0 {
            let mut prev_end = 0usize;
            let mut prev_cum = 0.0;
            for (q, slot) in quartile_means.iter_mut().enumerate() {
                let end = (n * (q + 1)) / 4;
                if end > prev_end {
                    let cum = self.records[end - 1].cumulative();
                    *slot = (cum - prev_cum) / (end - prev_end) as f64;
                    prev_cum = cum;
                    prev_end = end;
                }
            }
        }
        TraceSummary { final_cumulative: self.final_cumulative(), quartile_means }
    }

    /// Steps strictly increasing.
    pub fn is_well_ordered(&self) -> bool {
        self.records.windows(2).all(|w| w[0].step() < w[1].step())
    }
}

pub fn csv_header<R: TraceRecord>() -> String {
    let mut s = String::from("seed");
    for c in R::COLUMNS {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    s
}

/// Appends the rows of `trace` to `out`.
pub fn write_rows<R: TraceRecord>(trace: &RegretTrace<R>, out: &mut String) {
    for r in &trace.records {
        let _ = write!(out, "{}", trace.seed);
        for c in r.cells() {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
    }
}

/// Header plus rows of every trace, in the given order.
pub fn to_csv<R: TraceRecord>(traces: &[RegretTrace<R>]) -> String {
    let mut out = csv_header::<R>();
    for t in traces {
        write_rows(t, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Rec(u64, f64);

    impl TraceRecord for Rec {
        const COLUMNS: &'static [&'static str] = &["t", "cumulative_regret"];
        fn step(&self) -> u64 {
            self.0
        }
        fn cumulative(&self) -> f64 {
            self.1
        }
        fn cells(&self) -> Vec<String> {
            vec![self.0.to_string(), fmt_float(self.1)]
        }
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = fmt_float(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(fmt_float(0.0).parse::<f64>().unwrap(), 0.0);
    }

    #[test]
    fn summary_and_csv() {
        let t = RegretTrace { seed: 3, records: (1..=8).map(|i| Rec(i, i as f64 * 0.5)).collect() };
        let s = t.summary();
        assert_eq!(s.final_cumulative, 4.0);
        assert_eq!(s.quartile_means, [0.5; 4]);
        assert!(t.is_well_ordered());
        let csv = to_csv(&[t]);
        assert!(csv.starts_with("seed,t,cumulative_regret\n3,1,5.0000000000000000e-1\n"));
    }
}
