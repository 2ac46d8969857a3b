//! Daily market data: intraday ingestion and the daily CSV format.

use std::path::Path;

use abf_core::models::{bipower_variation, jump_variation, JumpDiffSeries};
use anyhow::{bail, ensure, Context, Result};

/// Aligned daily series. `bv` is absent when only `ln BV` was supplied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketDataBundle {
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
    pub ln_bv: Vec<f64>,
    pub rv: Vec<f64>,
    pub jv: Vec<f64>,
    /// Dates dropped during ingestion, with the reason.
    pub dropped: Vec<(String, String)>,
}

impl MarketDataBundle {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.returns.len();
        ensure!(
            self.ln_bv.len() == n && self.rv.len() == n && self.jv.len() == n && self.dates.len() == n,
            "daily series have unequal lengths"
        );
        ensure!(self.ln_bv.iter().all(|v| v.is_finite()), "ln BV must be finite (BV > 0)");
        ensure!(self.jv.iter().all(|v| *v >= 0.0), "JV must be nonnegative");
        Ok(())
    }

    /// Synthetic bundle; days are labelled `d0000`, `d0001`, ...
    pub fn from_simulation(s: &JumpDiffSeries) -> Self {
        Self {
            dates: (0..s.returns.len()).map(|t| format!("d{t:04}")).collect(),
            returns: s.returns.clone(),
            ln_bv: s.ln_bv.clone(),
            rv: s.rv.clone(),
            jv: s.jv.clone(),
            dropped: Vec::new(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["date", "return", "ln_bv", "rv", "jv"])?;
        for t in 0..self.len() {
            w.write_record([
                self.dates[t].clone(),
                format!("{:?}", self.returns[t]),
                format!("{:?}", self.ln_bv[t]),
                format!("{:?}", self.rv[t]),
                format!("{:?}", self.jv[t]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn seconds_of_day(s: &str, line: usize) -> Result<u32> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    ensure!((2..=3).contains(&parts.len()), "line {line}: time {s:?} is not HH:MM[:SS]");
    let mut secs = 0u32;
    for (i, p) in parts.iter().enumerate() {
        let v: u32 = p.parse().with_context(|| format!("line {line}: bad time {s:?}"))?;
        secs += v * [3600, 60, 1][i];
    }
    Ok(secs)
}

fn parse_num(s: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("line {line}: {what} {s:?} is not a number"))?;
    ensure!(v.is_finite(), "line {line}: {what} is not finite");
    Ok(v)
}

/// Reads either intraday prices `(date, time, price)` or daily rows
/// `(date, return, bv | ln_bv[, rv][, jv])`, chosen by the header.
///
/// Intraday prices are turned into per-day log returns; each day yields the
/// summed return, bipower variation, RV and JV. Days with fewer than two
/// intraday returns, or with zero bipower variation, are dropped and listed
/// in [`MarketDataBundle::dropped`].
pub fn ingest_intraday_csv(path: &Path) -> Result<MarketDataBundle> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let date = col("date").context("missing a date column")?;
    let bundle = if let (Some(time), Some(price)) = (col("time"), col("price")) {
        intraday(&mut rdr, date, time, price)?
    } else if let Some(ret) = col("return") {
        daily(&mut rdr, date, ret, col("bv"), col("ln_bv"), col("rv"), col("jv"))?
    } else {
        bail!("expected (date, time, price) or (date, return, bv) columns");
    };
    bundle.validate()?;
    Ok(bundle)
}

fn intraday(rdr: &mut csv::Reader<std::fs::File>, date: usize, time: usize, price: usize) -> Result<MarketDataBundle> {
    let mut days: Vec<(String, Vec<f64>)> = Vec::new();
    let mut last_time = 0u32;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("line {line}: malformed row"))?;
        let field = |j: usize| rec.get(j).with_context(|| format!("line {line}: missing column {j}"));
        let d = field(date)?.to_string();
        let secs = seconds_of_day(field(time)?, line)?;
        let p = parse_num(field(price)?, "price", line)?;
        ensure!(p > 0.0, "line {line}: price {p} is not positive");
        match days.last_mut() {
            Some((cur, prices)) if *cur == d => {
                ensure!(secs > last_time, "line {line}: timestamps within {d} are not increasing");
                prices.push(p);
            }
            _ => {
                ensure!(!days.iter().any(|(x, _)| *x == d), "line {line}: day {d} appears in two blocks");
                days.push((d, vec![p]));
            }
        }
        last_time = secs;
    }
    let mut out = MarketDataBundle::default();
    for (d, prices) in days {
        let r: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        if r.len() < 2 {
            out.dropped.push((d, format!("{} intraday returns", r.len())));
            continue;
        }
        let bv = bipower_variation(&r)?;
        if !(bv > 0.0) {
            out.dropped.push((d, "zero bipower variation".into()));
            continue;
        }
        let (rv, jv) = jump_variation(&r)?;
        out.dates.push(d);
        out.returns.push(r.iter().sum());
        out.ln_bv.push(bv.ln());
        out.rv.push(rv);
        out.jv.push(jv);
    }
    Ok(out)
}

fn daily(
    rdr: &mut csv::Reader<std::fs::File>,
    date: usize,
    ret: usize,
    bv: Option<usize>,
    ln_bv: Option<usize>,
    rv: Option<usize>,
    jv: Option<usize>,
) -> Result<MarketDataBundle> {
    ensure!(bv.is_some() || ln_bv.is_some(), "daily data needs a bv or ln_bv column");
    let mut out = MarketDataBundle::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("line {line}: malformed row"))?;
        let num = |j: usize, what: &str| {
            rec.get(j)
                .with_context(|| format!("line {line}: missing {what}"))
                .and_then(|s| parse_num(s, what, line))
        };
        let d = rec.get(date).with_context(|| format!("line {line}: missing date"))?.to_string();
        let lb = match (ln_bv, bv) {
            (Some(j), _) => num(j, "ln_bv")?,
            (None, Some(j)) => {
                let b = num(j, "bv")?;
                if !(b > 0.0) {
                    out.dropped.push((d, "zero bipower variation".into()));
                    continue;
                }
                b.ln()
            }
            (None, None) => unreachable!(),
        };
        let r = num(ret, "return")?;
        let rv_v = rv.map(|j| num(j, "rv")).transpose()?;
        let jv_v = match (jv, rv_v, bv) {
            (Some(j), _, _) => num(j, "jv")?,
            (None, Some(rv), Some(b)) => (rv - num(b, "bv")?).max(0.0),
            _ => 0.0,
        };
        ensure!(jv_v >= 0.0, "line {line}: negative jv");
        out.dates.push(d);
        out.returns.push(r);
        out.ln_bv.push(lb);
        out.rv.push(rv_v.unwrap_or(f64::NAN));
        out.jv.push(jv_v);
    }
    Ok(out)
}
