//! Deterministic desk-scale datasets: synthetic classification blobs,
//! synthetic time series with windowing, and CSV ingestion.
//!
//! Every constructor is a pure function of its configuration and seed. Row
//! order is preserved everywhere; shuffling happens only inside the trainer.

use crate::error::{Error, Result};
use crate::report::fmt_f64;
use crate::rng::SeededRng;
use crate::tensor::Matrix;
use std::path::Path;

/// Labeled classification samples. Labels are class indices in 0..n_classes.
#[derive(Debug, Clone)]
pub struct ClassificationDataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ClassificationDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    fn take_rows(&self, rows: &[usize]) -> ClassificationDataset {
        let mut data = Vec::with_capacity(rows.len() * self.dim());
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.inputs.row(r));
            labels.push(self.labels[r]);
        }
        ClassificationDataset {
            inputs: Matrix::new(rows.len(), self.dim(), data).expect("row copy"),
            labels,
            n_classes: self.n_classes,
        }
    }
}

/// Train/validation/test views of a classification dataset. Validation is
/// optional.
#[derive(Debug, Clone)]
pub struct ClassificationSplit {
    pub train: ClassificationDataset,
    pub val: Option<ClassificationDataset>,
    pub test: ClassificationDataset,
}

/// A univariate series plus derived sliding windows: each window pairs
/// `lookback` input values with the `horizon` values that follow.
#[derive(Debug, Clone)]
pub struct ForecastDataset {
    pub series: Vec<f64>,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    window_starts: Vec<usize>,
}

impl ForecastDataset {
    pub fn n_windows(&self) -> usize {
        self.window_starts.len()
    }

    pub fn input_window(&self, i: usize) -> &[f64] {
        let s = self.window_starts[i];
        &self.series[s..s + self.lookback]
    }

    pub fn target_window(&self, i: usize) -> &[f64] {
        let s = self.window_starts[i] + self.lookback;
        &self.series[s..s + self.horizon]
    }
}

/// Forecast dataset plus non-overlapping window-index splits in time order.
#[derive(Debug, Clone)]
pub struct ForecastSplit {
    pub dataset: ForecastDataset,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// K Gaussian clusters with deterministic centers. For dim >= 2 the centers
/// sit on the unit circle in the first two coordinates (distinct angles for
/// any K); for dim == 1 they sit at 0, 1, 2, ... Samples are generated
/// class-major, one gaussian draw per coordinate.
pub fn make_blobs(
    rng: &mut SeededRng,
    n_per_class: usize,
    n_classes: usize,
    dim: usize,
    spread: f64,
) -> Result<ClassificationDataset> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "make_blobs needs at least 2 classes, got {n_classes}"
        )));
    }
    if dim < 1 {
        return Err(Error::InvalidArgument("make_blobs needs dim >= 1".into()));
    }
    if n_per_class < 1 {
        return Err(Error::InvalidArgument(
            "make_blobs needs n_per_class >= 1".into(),
        ));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "make_blobs spread must be positive and finite, got {spread}"
        )));
    }
    let centers = blob_centers(n_classes, dim);
    let mut data = Vec::with_capacity(n_per_class * n_classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * n_classes);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            for &c in center {
                data.push(rng.gaussian(c, spread)?);
            }
            labels.push(class);
        }
    }
    Ok(ClassificationDataset {
        inputs: Matrix::new(n_per_class * n_classes, dim, data)?,
        labels,
        n_classes,
    })
}

/// Deterministic blob centers; exposed so evaluation code can reuse them.
pub fn blob_centers(n_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n_classes)
        .map(|j| {
            let mut center = vec![0.0; dim];
            if dim >= 2 {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / n_classes as f64;
                center[0] = angle.cos();
                center[1] = angle.sin();
            } else {
                center[0] = j as f64;
            }
            center
        })
        .collect()
}

/// Shape of the synthetic series: two sinusoids plus a linear trend.
#[derive(Debug, Clone)]
pub struct SeriesSpec {
    pub amp1: f64,
    pub period1: f64,
    pub amp2: f64,
    pub period2: f64,
    pub trend: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        // Hourly-flavored defaults: a daily and a weekly component plus a
        // mild upward drift.
        SeriesSpec {
            amp1: 1.0,
            period1: 24.0,
            amp2: 0.5,
            period2: 168.0,
            trend: 0.005,
        }
    }
}

/// Synthetic series with the default coefficients.
pub fn make_series(rng: &mut SeededRng, n: usize, noise: f64) -> Result<Vec<f64>> {
    make_series_with(rng, n, noise, &SeriesSpec::default())
}

/// Synthetic series: `amp1*sin(2πt/p1) + amp2*sin(2πt/p2) + trend*t + noise*N(0,1)`.
pub fn make_series_with(
    rng: &mut SeededRng,
    n: usize,
    noise: f64,
    spec: &SeriesSpec,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("make_series needs n > 0".into()));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "make_series noise must be >= 0, got {noise}"
        )));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut series = Vec::with_capacity(n);
    for t in 0..n {
        let t = t as f64;
        let clean = spec.amp1 * (tau * t / spec.period1).sin()
            + spec.amp2 * (tau * t / spec.period2).sin()
            + spec.trend * t;
        series.push(clean + rng.gaussian(0.0, noise)?);
    }
    Ok(series)
}

/// Sliding windows over a series. Window count is
/// `floor((len - lookback - horizon) / stride) + 1`.
pub fn window(series: Vec<f64>, lookback: usize, horizon: usize, stride: usize) -> Result<ForecastDataset> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "window needs lookback >= 1 and horizon >= 1".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("window needs stride >= 1".into()));
    }
    if lookback + horizon > series.len() {
        return Err(Error::InvalidArgument(format!(
            "window of {} + {} values does not fit a series of length {}",
            lookback,
            horizon,
            series.len()
        )));
    }
    let span = series.len() - lookback - horizon;
    let n_windows = span / stride + 1;
    let window_starts = (0..n_windows).map(|i| i * stride).collect();
    Ok(ForecastDataset {
        series,
        lookback,
        horizon,
        stride,
        window_starts,
    })
}

/// Stratified contiguous split: within each class the first rows go to
/// train, the next to validation, the rest to test. Pass `val_fraction = 0`
/// for no validation split.
pub fn split_classification(
    dataset: &ClassificationDataset,
    train_fraction: f64,
    val_fraction: f64,
) -> Result<ClassificationSplit> {
    check_fractions(train_fraction, val_fraction)?;
    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    let mut test_rows = Vec::new();
    for class in 0..dataset.n_classes {
        let rows: Vec<usize> = (0..dataset.len())
            .filter(|&r| dataset.labels[r] == class)
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class {class} has no samples"
            )));
        }
        let m = rows.len();
        let n_train = ((m as f64 * train_fraction).round() as usize).min(m);
        let n_val = ((m as f64 * val_fraction).round() as usize).min(m - n_train);
        if n_train == 0 {
            return Err(Error::InvalidArgument(format!(
                "train split would leave class {class} empty"
            )));
        }
        train_rows.extend_from_slice(&rows[..n_train]);
        val_rows.extend_from_slice(&rows[n_train..n_train + n_val]);
        test_rows.extend_from_slice(&rows[n_train + n_val..]);
    }
    if test_rows.is_empty() {
        return Err(Error::InvalidArgument("test split is empty".into()));
    }
    train_rows.sort_unstable();
    val_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(ClassificationSplit {
        train: dataset.take_rows(&train_rows),
        val: if val_rows.is_empty() {
            None
        } else {
            Some(dataset.take_rows(&val_rows))
        },
        test: dataset.take_rows(&test_rows),
    })
}

/// Contiguous time-ordered window split (train first, then validation, then
/// test). Defaults elsewhere use 60/20/20 proportions.
pub fn split_forecast(
    dataset: ForecastDataset,
    train_fraction: f64,
    val_fraction: f64,
) -> Result<ForecastSplit> {
    check_fractions(train_fraction, val_fraction)?;
    let n = dataset.n_windows();
    let n_train = ((n as f64 * train_fraction).round() as usize).min(n);
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "forecast split needs non-empty train and test (got {n_train}/{n_val}/{n_test} of {n})"
        )));
    }
    Ok(ForecastSplit {
        dataset,
        train: (0..n_train).collect(),
        val: (n_train..n_train + n_val).collect(),
        test: (n_train + n_val..n).collect(),
    })
}

fn check_fractions(train_fraction: f64, val_fraction: f64) -> Result<()> {
    let ok = (0.0..=1.0).contains(&train_fraction)
        && (0.0..=1.0).contains(&val_fraction)
        && train_fraction + val_fraction <= 1.0;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "invalid split fractions train={train_fraction} val={val_fraction}"
        )))
    }
}

// --- CSV ingestion ----------------------------------------------------
//
// Format: UTF-8, comma separated, '.' decimal separator, header row
// required. Classification files carry feature columns then one integer
// label column; series files carry exactly one value column.

/// Parses classification CSV text. Feature columns come first, the final
/// column is an integer class label in 0..n_classes.
pub fn parse_classification_csv(text: &str, n_classes: usize) -> Result<ClassificationDataset> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(
            "classification csv needs n_classes >= 2".into(),
        ));
    }
    let mut lines = numbered_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::CsvParse {
            line: 1,
            message: "missing header row".into(),
        })?;
    let n_cols = header.split(',').count();
    if n_cols < 2 {
        return Err(Error::CsvParse {
            line: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let dim = n_cols - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::CsvParse {
                line: line_no,
                message: format!("expected {n_cols} fields, found {}", fields.len()),
            });
        }
        for field in &fields[..dim] {
            data.push(parse_finite(field, line_no)?);
        }
        let label: usize = fields[dim].trim().parse().map_err(|_| Error::CsvParse {
            line: line_no,
            message: format!("label '{}' is not a non-negative integer", fields[dim]),
        })?;
        if label >= n_classes {
            return Err(Error::CsvParse {
                line: line_no,
                message: format!("label {label} outside 0..{n_classes}"),
            });
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let rows = labels.len();
    Ok(ClassificationDataset {
        inputs: Matrix::new(rows, dim, data)?,
        labels,
        n_classes,
    })
}

/// Parses a single-column series CSV.
pub fn parse_series_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = numbered_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::CsvParse {
            line: 1,
            message: "missing header row".into(),
        })?;
    if header.split(',').count() != 1 {
        return Err(Error::CsvParse {
            line: 1,
            message: "series csv must have exactly one column".into(),
        });
    }
    let mut series = Vec::new();
    for (line_no, line) in lines {
        if line.contains(',') {
            return Err(Error::CsvParse {
                line: line_no,
                message: "expected 1 field".into(),
            });
        }
        series.push(parse_finite(line, line_no)?);
    }
    if series.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(series)
}

pub fn load_classification_csv(path: &Path, n_classes: usize) -> Result<ClassificationDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_classification_csv(&text, n_classes)
}

pub fn load_series_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_series_csv(&text)
}

/// Writes a dataset in the same format `parse_classification_csv` reads.
/// Floats carry 17 significant digits so a round trip is exact.
pub fn classification_csv_string(dataset: &ClassificationDataset) -> String {
    let mut out = String::new();
    let headers: Vec<String> = (0..dataset.dim()).map(|i| format!("f{i}")).collect();
    out.push_str(&headers.join(","));
    out.push_str(",label\n");
    for r in 0..dataset.len() {
        for v in dataset.inputs.row(r) {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&dataset.labels[r].to_string());
        out.push('\n');
    }
    out
}

pub fn series_csv_string(series: &[f64]) -> String {
    let mut out = String::from("value\n");
    for v in series {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_finite(field: &str, line_no: usize) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::CsvParse {
        line: line_no,
        message: format!("non-numeric value '{field}'"),
    })?;
    if !value.is_finite() {
        return Err(Error::CsvParse {
            line: line_no,
            message: format!("non-finite value '{field}'"),
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_counts_and_balance() {
        let mut rng = SeededRng::new(1);
        let ds = make_blobs(&mut rng, 50, 2, 3, 0.2).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 50);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 50);
        assert!(ds.inputs.is_finite());
    }

    #[test]
    fn blobs_same_seed_identical() {
        let mut a = SeededRng::new(4);
        let mut b = SeededRng::new(4);
        let da = make_blobs(&mut a, 10, 3, 2, 0.5).unwrap();
        let db = make_blobs(&mut b, 10, 3, 2, 0.5).unwrap();
        assert_eq!(da.inputs, db.inputs);
        assert_eq!(da.labels, db.labels);
    }

    #[test]
    fn blobs_tiny_spread_is_nearest_centroid_separable() {
        let mut rng = SeededRng::new(2);
        let ds = make_blobs(&mut rng, 30, 3, 2, 1e-6).unwrap();
        let centers = blob_centers(3, 2);
        let mut correct = 0;
        for r in 0..ds.len() {
            let x = ds.inputs.row(r);
            let nearest = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum();
                    let db: f64 = b.iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(j, _)| j)
                .unwrap();
            if nearest == ds.labels[r] {
                correct += 1;
            }
        }
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn blobs_rejects_bad_arguments() {
        let mut rng = SeededRng::new(0);
        assert!(make_blobs(&mut rng, 10, 1, 2, 0.5).is_err());
        assert!(make_blobs(&mut rng, 10, 2, 0, 0.5).is_err());
        assert!(make_blobs(&mut rng, 0, 2, 2, 0.5).is_err());
        assert!(make_blobs(&mut rng, 10, 2, 2, 0.0).is_err());
    }

    #[test]
    fn series_noise_free_matches_closed_form() {
        let mut rng = SeededRng::new(5);
        let spec = SeriesSpec::default();
        let series = make_series_with(&mut rng, 10, 0.0, &spec).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        for (t, v) in series.iter().enumerate() {
            let t = t as f64;
            let expected = spec.amp1 * (tau * t / spec.period1).sin()
                + spec.amp2 * (tau * t / spec.period2).sin()
                + spec.trend * t;
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn series_same_seed_identical() {
        let mut a = SeededRng::new(6);
        let mut b = SeededRng::new(6);
        assert_eq!(
            make_series(&mut a, 1000, 0.1).unwrap(),
            make_series(&mut b, 1000, 0.1).unwrap()
        );
    }

    #[test]
    fn series_zero_trend_mean_near_zero_over_full_periods() {
        // Both default periods divide 336, so the sinusoid sum over the grid
        // is exactly zero and only the noise moves the mean.
        let spec = SeriesSpec {
            trend: 0.0,
            ..SeriesSpec::default()
        };
        let n = 336;
        let noise = 0.1;
        let mut rng = SeededRng::new(8);
        let series = make_series_with(&mut rng, n, noise, &spec).unwrap();
        let mean = series.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * noise / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn window_count_formula() {
        let series: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = window(series, 3, 2, 1).unwrap();
        assert_eq!(ds.n_windows(), 6);
        assert_eq!(ds.input_window(0), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.target_window(0), &[3.0, 4.0]);
        assert_eq!(ds.input_window(5), &[5.0, 6.0, 7.0]);
        assert_eq!(ds.target_window(5), &[8.0, 9.0]);
    }

    #[test]
    fn window_edge_cases() {
        let series: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert_eq!(window(series.clone(), 3, 2, 1).unwrap().n_windows(), 1);
        assert_eq!(window(series.clone(), 2, 1, 5).unwrap().n_windows(), 1);
        assert!(window(series, 4, 2, 1).is_err());
    }

    #[test]
    fn classification_split_partitions_exactly() {
        let mut rng = SeededRng::new(7);
        let ds = make_blobs(&mut rng, 20, 3, 2, 0.5).unwrap();
        let split = split_classification(&ds, 0.6, 0.2).unwrap();
        let total = split.train.len() + split.val.as_ref().map_or(0, |v| v.len()) + split.test.len();
        assert_eq!(total, ds.len());
        for class in 0..3 {
            assert!(split.train.labels.iter().any(|&l| l == class));
        }
    }

    #[test]
    fn forecast_split_is_time_ordered_partition() {
        let series: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ds = window(series, 8, 3, 1).unwrap();
        let n = ds.n_windows();
        let split = split_forecast(ds, 0.6, 0.2).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(split.train.last().unwrap() < split.val.first().unwrap());
        assert!(split.val.last().unwrap() < split.test.first().unwrap());
    }

    #[test]
    fn classification_csv_round_trip() {
        let mut rng = SeededRng::new(9);
        let ds = make_blobs(&mut rng, 5, 2, 3, 0.7).unwrap();
        let text = classification_csv_string(&ds);
        let back = parse_classification_csv(&text, 2).unwrap();
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn classification_csv_small_file() {
        let text = "f0,f1,label\n1.0,2.0,0\n3.5,-1.25,1\n0.0,0.0,1\n";
        let ds = parse_classification_csv(text, 2).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels, vec![0, 1, 1]);
    }

    #[test]
    fn classification_csv_errors_name_the_line() {
        let text = "f0,f1,label\nx,2.0,0\n";
        match parse_classification_csv(text, 2) {
            Err(Error::CsvParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "f0,f1,label\n1.0,2.0,0\n1.0,2.0,5\n";
        match parse_classification_csv(text, 2) {
            Err(Error::CsvParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected label range error, got {other:?}"),
        }
    }

    #[test]
    fn series_csv_round_trip() {
        let series = vec![1.5, -2.25, 0.0, 1e-7];
        let text = series_csv_string(&series);
        assert_eq!(parse_series_csv(&text).unwrap(), series);
    }
}
