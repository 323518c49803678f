use std::path::Path;

use crate::dsp::BandScheme;
use crate::error::{Error, IoContext, Result};
use crate::fusion::FusionWeights;
use crate::model::Architecture;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The table layouts the harness can emit. Each has its own descriptive
/// columns followed by the shared provenance columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportTable {
    /// Accuracy against N_ss.
    Table1,
    /// Network against mixup on the whole band.
    Table3,
    /// Fusion off/on per band scheme.
    Table4,
    /// Band scheme with its fusion weights.
    Table5,
    /// Network, mixup, segmentation and fusion combined.
    Table6,
    /// Every column; used for free-form sweeps.
    Sweep,
}

const PROVENANCE: [&str; 5] = ["fold_accuracy", "config_hash", "seed", "code_version", "status"];

impl ReportTable {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportTable::Table1 => "table1.csv",
            ReportTable::Table3 => "table3.csv",
            ReportTable::Table4 => "table4.csv",
            ReportTable::Table5 => "table5.csv",
            ReportTable::Table6 => "table6.csv",
            ReportTable::Sweep => "sweep.csv",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            ReportTable::Table1 => &["n_ss", "f_l_khz", "cuts_khz", "f_h_khz", "accuracy"],
            ReportTable::Table3 => &["network", "mixup", "accuracy"],
            ReportTable::Table4 => &["n_ss", "f_l_khz", "cuts_khz", "f_h_khz", "fusion", "accuracy"],
            ReportTable::Table5 => &["n_ss", "f_l_khz", "cuts_khz", "f_h_khz", "weights", "accuracy"],
            ReportTable::Table6 => &["network", "mixup", "segmentation", "fusion", "accuracy"],
            ReportTable::Sweep => &[
                "network",
                "mixup",
                "segmentation",
                "fusion",
                "n_ss",
                "f_l_khz",
                "cuts_khz",
                "f_h_khz",
                "weights",
                "accuracy",
            ],
        }
    }

    pub fn header(self) -> Vec<&'static str> {
        self.columns().iter().chain(PROVENANCE.iter()).copied().collect()
    }
}

/// One configuration's result over its test folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub network: Architecture,
    pub mixup: bool,
    pub fusion: bool,
    pub scheme: BandScheme,
    /// Fusion weights used on each test fold.
    pub weights: Vec<FusionWeights>,
    /// `(test fold, accuracy)`.
    pub fold_accuracy: Vec<(u32, f64)>,
    pub mean_accuracy: f64,
    pub config_hash: String,
    pub seed: u64,
    pub error: Option<String>,
}

fn khz(hz: f64) -> String {
    format!("{}", hz / 1000.0)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl ReportRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: Architecture,
        mixup: bool,
        fusion: bool,
        scheme: BandScheme,
        weights: Vec<FusionWeights>,
        fold_accuracy: Vec<(u32, f64)>,
        config_hash: String,
        seed: u64,
    ) -> Result<Self> {
        if fold_accuracy.is_empty() {
            return Err(Error::Metric("report row without any fold".into()));
        }
        let accs: Vec<f64> = fold_accuracy.iter().map(|&(_, a)| a).collect();
        Ok(Self {
            network,
            mixup,
            fusion,
            scheme,
            weights,
            fold_accuracy,
            mean_accuracy: mean(&accs),
            config_hash,
            seed,
            error: None,
        })
    }

    /// A row for a configuration that did not complete.
    pub fn failed(network: Architecture, mixup: bool, fusion: bool, scheme: BandScheme, config_hash: String, seed: u64, error: &Error) -> Self {
        Self {
            network,
            mixup,
            fusion,
            scheme,
            weights: Vec::new(),
            fold_accuracy: Vec::new(),
            mean_accuracy: f64::NAN,
            config_hash,
            seed,
            error: Some(error.to_string()),
        }
    }

    pub fn n_ss(&self) -> usize {
        self.scheme.n_bands()
    }

    fn weights_field(&self) -> String {
        let shown: Vec<String> = self.weights.iter().map(|w| w.display()).collect();
        match shown.first() {
            Some(first) if shown.iter().all(|s| s == first) => first.clone(),
            _ => shown.join(";"),
        }
    }

    fn field(&self, column: &str) -> String {
        let cuts = self.scheme.cut_points_hz();
        match column {
            "network" => self.network.label().to_string(),
            "mixup" => yes_no(self.mixup).into(),
            "segmentation" => yes_no(self.n_ss() > 1).into(),
            "fusion" => yes_no(self.fusion).into(),
            "n_ss" => self.n_ss().to_string(),
            "f_l_khz" => khz(cuts[0]),
            "cuts_khz" => {
                let inner = self.scheme.inner_cut_points_hz();
                if inner.is_empty() {
                    "-".into()
                } else {
                    inner.iter().map(|&f| khz(f)).collect::<Vec<_>>().join(",")
                }
            }
            "f_h_khz" => khz(cuts[cuts.len() - 1]),
            "weights" => self.weights_field(),
            "accuracy" if self.error.is_none() => format!("{:.6}", self.mean_accuracy),
            "accuracy" => String::new(),
            "fold_accuracy" => self
                .fold_accuracy
                .iter()
                .map(|(f, a)| format!("{f}:{a:.6}"))
                .collect::<Vec<_>>()
                .join(";"),
            "config_hash" => self.config_hash.clone(),
            "seed" => self.seed.to_string(),
            "code_version" => CODE_VERSION.into(),
            "status" => match &self.error {
                None => "ok".into(),
                Some(e) => format!("failed: {e}"),
            },
            other => unreachable!("unknown report column {other}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self, table: ReportTable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = table.header();
        w.write_record(&header)?;
        for row in &self.rows {
            w.write_record(header.iter().map(|c| row.field(c)))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("encoding report", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("report is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path, table: ReportTable) -> Result<()> {
        std::fs::write(path, self.to_csv(table)?).ctx(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &[f64], weights: &[f64], accs: &[(u32, f64)]) -> ReportRow {
        ReportRow::new(
            Architecture::Crnn,
            true,
            true,
            BandScheme::from_inner_khz(scheme, 44100).unwrap(),
            vec![FusionWeights::new(weights.to_vec()).unwrap(); accs.len()],
            accs.to_vec(),
            "abc".into(),
            7,
        )
        .unwrap()
    }

    #[test]
    fn table5_best_row_format() {
        let r = row(&[3.0, 6.0, 10.0], &[0.4, 0.2, 0.2, 0.2], &[(1, 0.819)]);
        let csv = ExperimentReport { rows: vec![r] }.to_csv(ReportTable::Table5).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n_ss,f_l_khz,cuts_khz,f_h_khz,weights,accuracy,fold_accuracy,config_hash,seed,code_version,status"
        );
        assert_eq!(
            lines.next().unwrap(),
            format!("4,0,\"3,6,10\",22.05,\"0.4,0.2,0.2,0.2\",0.819000,1:0.819000,abc,7,{CODE_VERSION},ok")
        );
    }

    #[test]
    fn baseline_row_has_weight_one() {
        let r = row(&[], &[1.0], &[(1, 0.5)]);
        let csv = ExperimentReport { rows: vec![r] }.to_csv(ReportTable::Table5).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("1,0,-,22.05,1,0.500000,"));
    }

    #[test]
    fn mean_over_folds() {
        let accs = [(1, 0.7), (2, 0.8), (3, 0.65), (4, 0.9), (5, 0.75)];
        let r = row(&[10.0], &[0.7, 0.3], &accs);
        let expect = accs.iter().map(|a| a.1).sum::<f64>() / 5.0;
        assert!((r.mean_accuracy - expect).abs() < 1e-12);
        assert!(ReportRow::new(Architecture::Crnn, false, false, BandScheme::whole_band(44100), vec![], vec![], "h".into(), 1).is_err());
    }

    #[test]
    fn failed_rows_are_annotated() {
        let r = ReportRow::failed(
            Architecture::CnnOnly,
            false,
            false,
            BandScheme::whole_band(44100),
            "h".into(),
            1,
            &Error::Config("boom".into()),
        );
        let csv = ExperimentReport { rows: vec![r] }.to_csv(ReportTable::Table3).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.starts_with("CNN,no,,"));
        assert!(line.ends_with("failed: configuration: boom"));
    }
}
