//! Correlation between data equivariance error and the per-group training
//! quantities, pooled over (dataset, group) pairs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use per_core::{Error, Result};

use crate::results::ResultRow;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One (dataset, group) point, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub dataset: String,
    pub group: String,
    pub data_equiv: f64,
    pub model_equiv: f64,
    pub regularizer: f64,
    pub lambda: f64,
}

pub const QUANTITIES: [&str; 3] = ["model_equiv", "regularizer", "lambda"];

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub quantity: String,
    pub r: f64,
    pub abs_r: f64,
    pub n: usize,
}

fn mean_finite(xs: &[f64]) -> f64 {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Average the successful rows over seeds, keyed by dataset, model and group.
pub fn observations(rows: &[ResultRow]) -> Vec<Observation> {
    type Acc = [Vec<f64>; 4];
    let mut acc: BTreeMap<(String, String, String), Acc> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        let dataset = format!("{}_t{}_s{}", r.task, r.error_type, r.error_scale);
        for (k, g) in r.groups.iter().enumerate() {
            let e = acc
                .entry((dataset.clone(), r.model.clone(), g.clone()))
                .or_default();
            e[0].push(r.data_equiv[k]);
            e[1].push(r.model_equiv[k]);
            e[2].push(r.regularizer[k]);
            e[3].push(r.lambda[k]);
        }
    }
    acc.into_iter()
        .map(|((dataset, _, group), a)| Observation {
            dataset,
            group,
            data_equiv: mean_finite(&a[0]),
            model_equiv: mean_finite(&a[1]),
            regularizer: mean_finite(&a[2]),
            lambda: mean_finite(&a[3]),
        })
        .collect()
}

/// Pooled Pearson r of each quantity against data equivariance error. A
/// quantity that no observation carries (λ for a baseline model, say) is left
/// out of the report.
pub fn correlate(obs: &[Observation]) -> Result<Vec<Correlation>> {
    let datasets: std::collections::BTreeSet<_> = obs.iter().map(|o| &o.dataset).collect();
    if datasets.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need results for at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let mut out = Vec::new();
    for q in QUANTITIES {
        let pick = |o: &Observation| match q {
            "model_equiv" => o.model_equiv,
            "regularizer" => o.regularizer,
            _ => o.lambda,
        };
        let (xs, ys): (Vec<f64>, Vec<f64>) = obs
            .iter()
            .filter(|o| o.data_equiv.is_finite() && pick(o).is_finite())
            .map(|o| (o.data_equiv, pick(o)))
            .unzip();
        if xs.is_empty() {
            continue;
        }
        let r = pearson(&xs, &ys).map_err(|e| match e {
            Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("{q}: {m}")),
            e => e,
        })?;
        out.push(Correlation {
            quantity: q.into(),
            r,
            abs_r: r.abs(),
            n: xs.len(),
        });
    }
    Ok(out)
}

pub fn write_report<W: Write>(mut w: W, report: &[Correlation]) -> Result<()> {
    writeln!(w, "quantity,r,abs_r,n")?;
    for c in report {
        writeln!(w, "{},{:.6},{:.6},{}", c.quantity, c.r, c.abs_r, c.n)?;
    }
    Ok(())
}

/// Observations from a wide per-dataset table with columns
/// `data_err_<axis>`, `lambda_<axis>`, `model_err_<axis>` and
/// `regularizer_<axis>` for each axis; the first column names the dataset.
pub fn read_wide_table(path: &Path) -> Result<Vec<Observation>> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let header = rdr.headers().map_err(io)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidValue(format!("{}: missing column {name}", path.display())))
    };
    let axes: Vec<String> = header
        .iter()
        .filter_map(|h| h.strip_prefix("data_err_").map(str::to_string))
        .collect();
    let mut cols = Vec::new();
    for a in &axes {
        cols.push([
            col(&format!("data_err_{a}"))?,
            col(&format!("model_err_{a}"))?,
            col(&format!("regularizer_{a}"))?,
            col(&format!("lambda_{a}"))?,
        ]);
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let num = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidValue(format!("bad number `{}`", &rec[i])))
        };
        for (a, c) in axes.iter().zip(&cols) {
            out.push(Observation {
                dataset: rec[0].to_string(),
                group: format!("o2{a}"),
                data_equiv: num(c[0])?,
                model_equiv: num(c[1])?,
                regularizer: num(c[2])?,
                lambda: num(c[3])?,
            });
        }
    }
    Ok(out)
}
