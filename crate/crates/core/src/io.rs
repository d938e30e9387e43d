//! CSV output. Floats are written with 17 significant digits so that every
//! value round-trips exactly.

use std::io::Write;

use csv::Writer;

use crate::analysis::SweepRow;
use crate::firstbest::Comparison;
use crate::hjb::ValueFunction;
use crate::simulator::{BatchSummary, MeanSe, PathStats, TimeSeriesRow};

pub type CsvResult = Result<(), csv::Error>;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn q_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Columns t, q_1..q_N, v, log_neg_v at every `stride`-th stored time.
pub fn write_value_function<W: Write>(out: W, value: &ValueFunction, stride: usize) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(q_headers("q", value.space.n));
    header.extend(["v".to_string(), "log_neg_v".to_string()]);
    w.write_record(&header)?;
    for (t, q, v, logv) in value.rows(stride) {
        let mut rec = vec![fmt_f64(t)];
        rec.extend(q.iter().map(|x| x.to_string()));
        rec.push(fmt_f64(v));
        rec.push(fmt_f64(logv));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns t, q_1..q_N, v_sb, v_fb.
pub fn write_comparison<W: Write>(out: W, cmp: &Comparison, stride: usize) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(q_headers("q", cmp.second_best.space.n));
    header.extend(["v_sb".to_string(), "v_fb".to_string()]);
    w.write_record(&header)?;
    for (t, q, sb, fb) in cmp.rows(stride) {
        let mut rec = vec![fmt_f64(t)];
        rec.extend(q.iter().map(|x| x.to_string()));
        rec.push(fmt_f64(sb));
        rec.push(fmt_f64(fb));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per path.
pub fn write_path_stats<W: Write>(out: W, paths: &[PathStats]) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let n = paths.first().map_or(0, |p| p.agent_wealth.len());
    let mut header: Vec<String> = [
        "seed",
        "avg_best_ask",
        "avg_best_bid",
        "total_flow",
        "exchange_pnl",
        "exchange_utility",
        "trading_cost",
        "martingale_ask",
        "martingale_bid",
        "clamp_events",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(q_headers("flow", n));
    header.extend(q_headers("wealth", n));
    header.extend(q_headers("utility", n));
    w.write_record(&header)?;
    for p in paths {
        let mut rec = vec![
            p.seed.to_string(),
            fmt_f64(p.avg_best_ask),
            fmt_f64(p.avg_best_bid),
            fmt_f64(p.total_flow),
            fmt_f64(p.exchange_pnl),
            fmt_f64(p.exchange_utility),
            fmt_f64(p.trading_cost),
            fmt_f64(p.martingale[0]),
            fmt_f64(p.martingale[1]),
            p.clamp_events.to_string(),
        ];
        rec.extend(p.per_agent_flow.iter().map(|&x| fmt_f64(x)));
        rec.extend(p.agent_wealth.iter().map(|&x| fmt_f64(x)));
        rec.extend(p.agent_utilities.iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// (name, statistic) pairs of a batch summary in a fixed order.
pub fn summary_fields(s: &BatchSummary) -> Vec<(String, MeanSe)> {
    let mut out = vec![
        ("avg_best_ask".to_string(), s.avg_best_ask),
        ("avg_best_bid".to_string(), s.avg_best_bid),
        ("total_spread".to_string(), s.total_spread),
        ("total_flow".to_string(), s.total_flow),
        ("trading_cost".to_string(), s.trading_cost),
        ("exchange_pnl".to_string(), s.exchange_pnl),
        ("martingale_ask".to_string(), s.martingale_ask),
        ("martingale_bid".to_string(), s.martingale_bid),
    ];
    for (i, m) in s.per_agent_flow.iter().enumerate() {
        out.push((format!("flow_{}", i + 1), *m));
    }
    for (i, m) in s.agent_wealth.iter().enumerate() {
        out.push((format!("wealth_{}", i + 1), *m));
    }
    out
}

/// Aggregate CSV with columns statistic, mean, se, n.
pub fn write_summary<W: Write>(out: W, s: &BatchSummary) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["statistic", "mean", "se", "n"])?;
    for (name, m) in summary_fields(s) {
        w.write_record([name, fmt_f64(m.mean), fmt_f64(m.se), m.n.to_string()])?;
    }
    w.write_record([
        "clamp_events".to_string(),
        fmt_f64(s.clamp_events as f64),
        fmt_f64(0.0),
        s.n_paths.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Columns t, S, q_1..q_N, best_ask, best_bid, n_a, n_b, xi_1..xi_N.
pub fn write_timeseries<W: Write>(out: W, rows: &[TimeSeriesRow]) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let n = rows.first().map_or(0, |r| r.q.len());
    let mut header = vec!["t".to_string(), "S".to_string()];
    header.extend(q_headers("q", n));
    header.extend(["best_ask", "best_bid", "n_a", "n_b"].iter().map(|s| s.to_string()));
    header.extend(q_headers("xi", n));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.t), fmt_f64(r.s)];
        rec.extend(r.q.iter().map(|x| x.to_string()));
        rec.push(fmt_f64(r.best_ask));
        rec.push(fmt_f64(r.best_bid));
        rec.push(r.n_a.to_string());
        rec.push(r.n_b.to_string());
        rec.extend(r.xi.iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per sweep point: metadata followed by mean and SE of every
/// aggregate statistic shared by all rows.
pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> CsvResult {
    let mut w = Writer::from_writer(out);
    let stats = [
        "avg_best_ask",
        "avg_best_bid",
        "total_spread",
        "total_flow",
        "trading_cost",
        "exchange_pnl",
        "martingale_ask",
        "martingale_bid",
    ];
    let mut header: Vec<String> = [
        "axis", "value", "key", "n_agents", "varpi", "c", "dt", "q_bar", "symmetric", "runtime_s", "spread_t0",
        "s_of_n", "paths",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for s in stats {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_se"));
    }
    header.push("error".to_string());
    w.write_record(&header)?;
    for r in rows {
        let axis = serde_json::to_value(r.axis)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let mut rec = vec![
            axis,
            fmt_f64(r.value),
            r.key.clone(),
            r.n_agents.to_string(),
            fmt_f64(r.varpi),
            fmt_f64(r.c),
            fmt_f64(r.dt),
            r.q_bar.to_string(),
            r.symmetric.to_string(),
            fmt_f64(r.runtime_s),
            fmt_f64(r.spread_t0),
            fmt_f64(r.s_of_n),
            r.summary.as_ref().map_or(0, |s| s.n_paths).to_string(),
        ];
        let fields = r.summary.as_ref().map(summary_fields);
        for (k, _) in stats.iter().enumerate() {
            match &fields {
                Some(f) => {
                    rec.push(fmt_f64(f[k].1.mean));
                    rec.push(fmt_f64(f[k].1.se));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns n, s_of_n.
pub fn write_s_of_n<W: Write>(out: W, table: &[(f64, f64)]) -> CsvResult {
    let mut w = Writer::from_writer(out);
    w.write_record(["n", "s_of_n"])?;
    for &(n, s) in table {
        w.write_record([fmt_f64(n), fmt_f64(s)])?;
    }
    w.flush()?;
    Ok(())
}
