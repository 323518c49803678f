use std::path::Path;

use rand::SeedableRng;

use super::config::ExperimentConfig;
use super::pipeline::{cmd_extract, cmd_train, evaluate, RunOptions};
use super::report::{ExperimentReport, ReportRow, ReportTable};
use crate::dsp::BandScheme;
use crate::error::{Error, IoContext, Result};
use crate::model::{Architecture, CrnnModel, INPUT_CHANNELS, INPUT_FRAMES, INPUT_MELS};
use crate::nn::{LayerSpec, Tensor};
use crate::seed::Rng;

/// One row of a sweep: which scheme and which ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scheme: BandScheme,
    pub network: Architecture,
    pub mixup: bool,
    /// Searched weights when on, uniform averaging when off.
    pub fusion: bool,
}

impl RunSpec {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.bands = self.scheme.clone();
        c.network = self.network;
        c.mixup.enabled = self.mixup;
        c.fusion.search = self.fusion;
        c.fusion.weights = None;
        c
    }
}

/// Inner cut points (kHz) of the N_ss sweep, N_ss = 1..6.
pub const TABLE1_INNER_KHZ: [&[f64]; 6] = [&[], &[10.0], &[6.0, 10.0], &[3.0, 6.0, 10.0], &[3.0, 6.0, 10.0, 15.0], &[3.0, 6.0, 10.0, 13.0, 16.0]];

/// Inner cut points (kHz) of the scheme comparison.
pub const TABLE5_INNER_KHZ: [&[f64]; 13] = [
    &[],
    &[10.0],
    &[10.0, 20.0],
    &[7.0, 14.0],
    &[6.0, 10.0],
    &[10.0, 15.0, 20.0],
    &[5.0, 10.0, 15.0],
    &[3.0, 6.0, 10.0],
    &[10.0, 13.0, 16.0, 19.0],
    &[5.0, 10.0, 15.0, 20.0],
    &[3.0, 6.0, 10.0, 15.0],
    &[3.0, 6.0, 10.0, 13.0, 16.0],
    &[6.0, 10.0, 13.0, 16.0, 19.0],
];

/// Segmented scheme used in the combined comparison when the base config is
/// single-band.
pub const DEFAULT_SEGMENTATION_KHZ: &[f64] = &[3.0, 6.0, 10.0];

fn schemes(list: &[&[f64]], sample_rate_hz: u32) -> Result<Vec<BandScheme>> {
    list.iter().map(|inner| BandScheme::from_inner_khz(inner, sample_rate_hz)).collect()
}

/// Every combination, schemes outermost, then network, mixup, fusion.
pub fn flag_product(schemes: &[BandScheme], networks: &[Architecture], mixup: &[bool], fusion: &[bool]) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for s in schemes {
        for &network in networks {
            for &m in mixup {
                for &f in fusion {
                    out.push(RunSpec {
                        scheme: s.clone(),
                        network,
                        mixup: m,
                        fusion: f,
                    });
                }
            }
        }
    }
    out
}

/// The rows of a preset table, in the table's row order. Network and mixup
/// come from `base` where the table does not vary them.
pub fn table_runs(table: ReportTable, base: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    let sr = base.spectrogram.sample_rate_hz;
    let (net, mix) = (base.network, base.mixup.enabled);
    let run = |scheme: &BandScheme, network, mixup, fusion| RunSpec {
        scheme: scheme.clone(),
        network,
        mixup,
        fusion,
    };
    Ok(match table {
        ReportTable::Table1 => schemes(&TABLE1_INNER_KHZ, sr)?.iter().map(|s| run(s, net, mix, true)).collect(),
        ReportTable::Table3 => {
            let whole = BandScheme::whole_band(sr);
            let (cnn, crnn) = (Architecture::CnnOnly, Architecture::Crnn);
            vec![
                run(&whole, cnn, false, false),
                run(&whole, crnn, false, false),
                run(&whole, cnn, true, false),
                run(&whole, crnn, true, false),
            ]
        }
        ReportTable::Table4 => flag_product(&schemes(&TABLE1_INNER_KHZ[1..5], sr)?, &[net], &[mix], &[false, true]),
        ReportTable::Table5 => schemes(&TABLE5_INNER_KHZ, sr)?.iter().map(|s| run(s, net, mix, true)).collect(),
        ReportTable::Table6 => {
            let whole = BandScheme::whole_band(sr);
            let seg = if base.bands.n_bands() > 1 {
                base.bands.clone()
            } else {
                BandScheme::from_inner_khz(DEFAULT_SEGMENTATION_KHZ, sr)?
            };
            let (cnn, crnn) = (Architecture::CnnOnly, Architecture::Crnn);
            let mut rows = vec![
                run(&whole, cnn, false, false),
                run(&whole, crnn, false, false),
                run(&whole, cnn, true, false),
                run(&whole, crnn, true, false),
            ];
            for mixup in [false, true] {
                for network in [cnn, crnn] {
                    for fusion in [false, true] {
                        rows.push(run(&seg, network, mixup, fusion));
                    }
                }
            }
            rows
        }
        ReportTable::Sweep => {
            return Err(Error::Config("the free-form sweep has no preset rows".into()));
        }
    })
}

/// Runs extract, train and evaluate for every spec. Features and models are
/// shared between rows that only differ in later stages. A failing row is
/// reported with its error and the sweep moves on.
pub fn cmd_sweep(base: &ExperimentConfig, runs: &[RunSpec], opts: &RunOptions) -> Result<ExperimentReport> {
    base.validate()?;
    let mut report = ExperimentReport::default();
    for spec in runs {
        let cfg = spec.apply(base);
        let outcome = (|| {
            cmd_extract(&cfg, opts)?;
            cmd_train(&cfg, opts)?;
            Ok::<_, Error>(evaluate(&cfg, None)?.row)
        })();
        let row = match outcome {
            Ok(row) => row,
            Err(e) => ReportRow::failed(
                spec.network,
                spec.mixup,
                spec.fusion,
                spec.scheme.clone(),
                cfg.hash().unwrap_or_default(),
                cfg.seed,
                &e,
            ),
        };
        report.rows.push(row);
    }
    Ok(report)
}

/// Layer table of the CRNN: name, filters, kernel, stride and the traced
/// per-sample output shape.
pub fn architecture_table(n_classes: usize, arch: Architecture) -> Result<Vec<[String; 5]>> {
    let mut model = CrnnModel::new(n_classes, 0, arch, &mut Rng::seed_from_u64(0))?;
    let x = Tensor::<f32>::zeros(&[1, INPUT_MELS, INPUT_FRAMES, INPUT_CHANNELS]);
    model.net.forward(&x)?;
    let pair = |(a, b): (usize, usize)| format!("({a},{b})");
    let shape = |s: &[usize]| format!("({})", s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
    let mut rows = Vec::new();
    for ((name, spec), (_, out)) in model.net.specs().iter().zip(model.net.trace()) {
        let (filters, kernel, stride) = match spec {
            LayerSpec::Conv2d { filters, kernel, stride } => (filters.to_string(), pair(*kernel), pair(*stride)),
            LayerSpec::MaxPool2d { stride } => ("-".into(), "-".into(), pair(*stride)),
            LayerSpec::BiGru { units } => ((2 * units).to_string(), "-".into(), "-".into()),
            LayerSpec::Dense { units } => (units.to_string(), "-".into(), "-".into()),
            _ => continue,
        };
        rows.push([name.clone(), filters, kernel, stride, shape(out)]);
    }
    Ok(rows)
}

pub fn write_architecture_table(path: &Path, n_classes: usize, arch: Architecture) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["layer", "filters", "filter_size", "stride", "output_size"])?;
    for row in architecture_table(n_classes, arch)? {
        w.write_record(&row)?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_row_counts() {
        let base = ExperimentConfig::toy("d", "o");
        assert_eq!(table_runs(ReportTable::Table1, &base).unwrap().len(), 6);
        assert_eq!(table_runs(ReportTable::Table3, &base).unwrap().len(), 4);
        assert_eq!(table_runs(ReportTable::Table4, &base).unwrap().len(), 8);
        assert_eq!(table_runs(ReportTable::Table5, &base).unwrap().len(), 13);
        assert_eq!(table_runs(ReportTable::Table6, &base).unwrap().len(), 12);
        let t1 = table_runs(ReportTable::Table1, &base).unwrap();
        let n: Vec<usize> = t1.iter().map(|r| r.scheme.n_bands()).collect();
        assert_eq!(n, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn four_ablation_rows_for_one_scheme() {
        let s = BandScheme::whole_band(44100);
        let rows = flag_product(&[s], &[Architecture::Crnn], &[false, true], &[false, true]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].mixup, false);
        assert_eq!(rows[1].fusion, true);
    }

    #[test]
    fn architecture_rows() {
        let rows = architecture_table(50, Architecture::Crnn).unwrap();
        assert_eq!(rows.len(), 15);
        assert_eq!(rows[5], ["pool2", "-", "-", "(2,1)", "(8,30,64)"].map(String::from));
        assert_eq!(rows[13][4], "(8,256)");
        assert_eq!(rows[14][4], "(50)");
    }
}
