//! Metric tables over test slices and their CSV / PGM reports.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::pgm::write_pgm;
use crate::numerics::Grid2D;
use crate::pair::{Image, Modality, SplitPair};
use crate::trainer::TrainState;

use super::metrics::{report_rmse, report_ssim, SsimConfig, LIVER_WINDOW_HU};

pub const METRICS_HEADER: [&str; 7] = ["method", "slices", "rmse_mean", "rmse_std", "ssim_mean", "ssim_std", "rmse_unit"];
pub const PER_SLICE_HEADER: [&str; 4] = ["method", "slice", "rmse", "ssim"];

/// One method's scores over the test slices.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub rmse: Vec<f64>,
    pub ssim: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return if v.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl MetricsRow {
    pub fn rmse_mean(&self) -> f64 {
        mean(&self.rmse)
    }
    pub fn rmse_std(&self) -> f64 {
        std(&self.rmse)
    }
    pub fn ssim_mean(&self) -> f64 {
        mean(&self.ssim)
    }
    pub fn ssim_std(&self) -> f64 {
        std(&self.ssim)
    }
}

/// A way of producing a denoised slice.
pub enum Method<'a> {
    /// The reconstruction from all measured data (FBP of every view, or
    /// zero-fill of the full mask).
    Input,
    Trained(&'a str, &'a TrainState),
}

impl Method<'_> {
    pub fn label(&self) -> &str {
        match self {
            Method::Input => "input",
            Method::Trained(label, _) => label,
        }
    }

    pub fn output(&self, pair: &SplitPair) -> Result<Image> {
        match self {
            Method::Input => Ok(pair.est.clone()),
            Method::Trained(_, state) => state.denoise(pair),
        }
    }
}

/// Scores every method on every test slice against its clean reference.
pub fn evaluate(test: &[SplitPair], methods: &[Method<'_>]) -> Result<Vec<MetricsRow>> {
    let cfg = SsimConfig::default();
    methods
        .iter()
        .map(|m| {
            let mut row = MetricsRow {
                method: m.label().to_string(),
                rmse: Vec::with_capacity(test.len()),
                ssim: Vec::with_capacity(test.len()),
            };
            for (i, pair) in test.iter().enumerate() {
                let clean = pair
                    .clean
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("test slice {i} has no clean reference")))?;
                let out = m.output(pair)?;
                row.rmse.push(report_rmse(&out, clean)?);
                row.ssim.push(report_ssim(&out, clean, &cfg)?);
            }
            Ok(row)
        })
        .collect()
}

pub fn rmse_unit(modality: Modality) -> &'static str {
    match modality {
        Modality::Ct => "HU",
        Modality::Mr => "1e-3",
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow], modality: Modality) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.rmse.len().to_string(),
            r.rmse_mean().to_string(),
            r.rmse_std().to_string(),
            r.ssim_mean().to_string(),
            r.ssim_std().to_string(),
            rmse_unit(modality).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_per_slice_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PER_SLICE_HEADER)?;
    for r in rows {
        for (i, (a, b)) in r.rmse.iter().zip(&r.ssim).enumerate() {
            w.write_record([r.method.clone(), i.to_string(), a.to_string(), b.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Summary rows as written by [`write_metrics_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub slices: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub rmse_unit: String,
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let bad = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    if rdr.headers()?.iter().ne(METRICS_HEADER) {
        return Err(bad("unexpected metrics header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("column {i}")))
        };
        out.push(SummaryRow {
            method: rec.get(0).unwrap_or_default().to_string(),
            slices: rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("slices".into()))?,
            rmse_mean: num(2)?,
            rmse_std: num(3)?,
            ssim_mean: num(4)?,
            ssim_std: num(5)?,
            rmse_unit: rec.get(6).unwrap_or_default().to_string(),
        });
    }
    Ok(out)
}

/// Display image and window: HU in the liver window for CT, magnitude over
/// `[0, peak of reference]` for MR.
fn display(img: &Image, reference: &Image) -> (Grid2D, f64, f64) {
    match (img, reference) {
        (Image::Real(g), _) => (g.map(|v| v * 1000.0), LIVER_WINDOW_HU.0, LIVER_WINDOW_HU.1),
        (Image::Complex(g), r) => {
            let peak = match r {
                Image::Complex(c) => c.magnitude().data().iter().cloned().fold(0.0, f64::max),
                Image::Real(c) => c.data().iter().cloned().fold(0.0, f64::max),
            };
            (g.magnitude(), 0.0, if peak > 0.0 { peak } else { 1.0 })
        }
    }
}

pub fn write_preview(path: &Path, img: &Image, reference: &Image) -> Result<()> {
    let (g, lo, hi) = display(img, reference);
    write_pgm(path, &g, lo, hi)
}

pub fn provenance_text(modality: Modality) -> String {
    let ssim = SsimConfig::default();
    let range = match modality {
        Modality::Ct => format!(
            "ct: images clipped to [{}, {}] HU and shifted to [0, 400]; dynamic range 400",
            LIVER_WINDOW_HU.0, LIVER_WINDOW_HU.1
        ),
        Modality::Mr => "mr: magnitudes; dynamic range = peak magnitude of the clean slice".to_string(),
    };
    format!(
        "ssim: {}\nssim range {range}\nssim reported x100\nrmse unit: {}\n",
        ssim.describe(),
        rmse_unit(modality)
    )
}

/// Writes `metrics.csv`, `per_slice.csv`, `provenance.txt` and PGM previews
/// of the first test slice for every method.
pub fn report(
    out_dir: &Path,
    rows: &[MetricsRow],
    modality: Modality,
    preview: Option<(&SplitPair, &[Method<'_>])>,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_metrics_csv(&out_dir.join("metrics.csv"), rows, modality)?;
    write_per_slice_csv(&out_dir.join("per_slice.csv"), rows)?;
    let prov = out_dir.join("provenance.txt");
    fs::write(&prov, provenance_text(modality)).map_err(|e| Error::io(prov, e))?;
    if let Some((pair, methods)) = preview {
        if let Some(clean) = &pair.clean {
            write_preview(&out_dir.join("preview_reference.pgm"), clean, clean)?;
            write_preview(&out_dir.join("preview_r1.pgm"), &pair.r1, clean)?;
            for m in methods {
                write_preview(&out_dir.join(format!("preview_{}.pgm", m.label())), &m.output(pair)?, clean)?;
            }
        }
    }
    Ok(())
}

/// Aligned plain-text table.
pub fn format_table(rows: &[MetricsRow], modality: Modality) -> String {
    let mut s = format!(
        "{:<14} {:>20} {:>18}\n",
        "method",
        format!("RMSE ({})", rmse_unit(modality)),
        "SSIM (%)"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<14} {:>12.2} ± {:<5.2} {:>10.2} ± {:<5.2}\n",
            r.method,
            r.rmse_mean(),
            r.rmse_std(),
            r.ssim_mean(),
            r.ssim_std()
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{pgm::window_to_byte, Rng, Unit};

    fn clean_pair(seed: u64) -> SplitPair {
        let mut rng = Rng::new(seed);
        let g = Image::Real(Grid2D::from_fn(16, 16, Unit::HuPerThousand, |_, _| 0.1 * rng.standard_normal()));
        SplitPair::new(Modality::Ct, g.clone(), g.clone(), g.clone(), Some(g), 1.0).unwrap()
    }

    #[test]
    fn identity_on_clean_inputs_is_perfect() {
        let rows = evaluate(&[clean_pair(1), clean_pair(2)], &[Method::Input]).unwrap();
        assert_eq!(rows[0].rmse, vec![0.0, 0.0]);
        assert_eq!(rows[0].ssim, vec![100.0, 100.0]);
        assert_eq!(rows[0].ssim_std(), 0.0);
    }

    #[test]
    fn empty_metrics_give_a_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &[], Modality::Ct).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().trim(), METRICS_HEADER.join(","));
        assert!(read_metrics_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trips() {
        let rows = vec![
            MetricsRow {
                method: "input".into(),
                rmse: vec![31.5, 28.25, 40.125],
                ssim: vec![70.0, 71.5, 69.0],
            },
            MetricsRow {
                method: "consensus".into(),
                rmse: vec![12.0 / 7.0],
                ssim: vec![0.1 + 0.2],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &rows, Modality::Mr).unwrap();
        let back = read_metrics_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        for (r, b) in rows.iter().zip(&back) {
            assert_eq!(b.method, r.method);
            assert_eq!(b.slices, r.rmse.len());
            assert_eq!(b.rmse_mean.to_bits(), r.rmse_mean().to_bits());
            assert_eq!(b.ssim_std.to_bits(), r.ssim_std().to_bits());
            assert_eq!(b.rmse_unit, "1e-3");
        }
    }

    #[test]
    fn preview_window_mapping() {
        assert_eq!(window_to_byte(-160.0, LIVER_WINDOW_HU.0, LIVER_WINDOW_HU.1), 0);
        assert_eq!(window_to_byte(240.0, LIVER_WINDOW_HU.0, LIVER_WINDOW_HU.1), 255);
        let img = Image::Real(Grid2D::new(1, 3, vec![-0.16, 0.04, 0.24], Unit::HuPerThousand).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        write_preview(&p, &img, &img).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }

    #[test]
    fn report_writes_all_files_and_provenance() {
        let pair = clean_pair(3);
        let methods = [Method::Input];
        let rows = evaluate(std::slice::from_ref(&pair), &methods).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report(dir.path(), &rows, Modality::Ct, Some((&pair, &methods))).unwrap();
        for f in ["metrics.csv", "per_slice.csv", "provenance.txt", "preview_input.pgm", "preview_reference.pgm"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let prov = fs::read_to_string(dir.path().join("provenance.txt")).unwrap();
        assert!(prov.contains("K1 0.01") && prov.contains("K2 0.03") && prov.contains("11x11"));
    }

    #[test]
    fn evaluation_is_pure() {
        let test = [clean_pair(4)];
        let a = evaluate(&test, &[Method::Input]).unwrap();
        let b = evaluate(&test, &[Method::Input]).unwrap();
        assert_eq!(a, b);
    }
}
