//! Plain-text tables for terminal output.

use std::fmt::Write;

use mats_core::{AnalysisReport, CalibrationResult, DoseSelection, OperatingCharacteristics, Scenario};

fn opt(v: Option<f64>, width: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.3}"),
        None => format!("{:>width$}", "-"),
    }
}

fn selection(s: Option<DoseSelection>) -> &'static str {
    match s {
        None => "-",
        Some(DoseSelection::None) => "none",
        Some(DoseSelection::High) => "DL-H",
        Some(DoseSelection::Low) => "DL-L",
    }
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        None => "-",
        Some(true) => "yes",
        Some(false) => "no",
    }
}

pub fn calibration(r: &CalibrationResult) -> String {
    let mut s = String::new();
    match r.tau2 {
        Some(t) => writeln!(
            s,
            "tau2 = {t}  (largest grid value with delta <= {} for every p2)",
            r.delta_target
        ),
        None => writeln!(s, "no grid value keeps delta <= {} for every p2", r.delta_target),
    }
    .unwrap();
    write!(s, "\n{:>6}", "tau2").unwrap();
    for p in &r.p2_candidates {
        write!(s, " {:>10}", format!("p2={p}")).unwrap();
    }
    writeln!(s, "  feasible").unwrap();
    for row in &r.table {
        write!(s, "{:>6}", row.tau2).unwrap();
        for d in &row.deltas {
            write!(s, " {d:>10.6}").unwrap();
        }
        writeln!(s, "  {}", if row.feasible { "yes" } else { "no" }).unwrap();
    }
    s
}

/// One row per scenario with the summary metrics, then GO rates and sample sizes.
pub fn oc_table(ocs: &[OperatingCharacteristics]) -> String {
    let mut s = String::new();
    let width = ocs.iter().map(|o| o.scenario.len()).max().unwrap_or(8).max(8);
    writeln!(
        s,
        "{:<width$} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "scenario", "S1-FW-I", "S1-FW-II", "S2-FW-I", "perfect", "PoC", "DO"
    )
    .unwrap();
    for o in ocs {
        writeln!(
            s,
            "{:<width$} {} {} {} {} {} {}",
            o.scenario,
            opt(o.stage1_type1_fw, 8),
            opt(o.stage1_type2_fw, 8),
            opt(o.stage2_type1_fw, 8),
            opt(o.perfect, 8),
            opt(o.poc, 8),
            opt(o.do_metric, 8)
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<width$} {:>24}   average sample size",
        "scenario", "GO rate by indication"
    )
    .unwrap();
    for o in ocs {
        let go: Vec<String> = o.go_rate.iter().map(|g| format!("{g:.3}")).collect();
        let n: Vec<String> = o.avg_sample_size.iter().map(|v| format!("{v:.1}")).collect();
        writeln!(s, "{:<width$} {:>24}   {}", o.scenario, go.join(" "), n.join(" ")).unwrap();
    }
    writeln!(
        s,
        "\n{} replicates, seed {}",
        ocs.first().map_or(0, |o| o.n_replicates),
        ocs.first().map_or(0, |o| o.seed)
    )
    .unwrap();
    s
}

pub fn analysis(r: &AnalysisReport) -> String {
    let mut s = String::new();
    writeln!(s, "{:?} analysis (seed {})\n", r.stage, r.seed).unwrap();
    writeln!(
        s,
        "{:>10} {:>8} {:>4} {:>8} {:>8} {:>8} {:>6} {:>6} {:>4} {:>9}",
        "indication", "P(GO)", "GO", "P(PoC-H)", "P(PoC-L)", "P(DO)", "PoC-H", "PoC-L", "DO", "selection"
    )
    .unwrap();
    let d = &r.decisions;
    for (j, p) in r.decision_probs.iter().enumerate() {
        writeln!(
            s,
            "{:>10} {:>8.3} {:>4} {} {} {} {:>6} {:>6} {:>4} {:>9}",
            j + 1,
            p.go,
            if d.go_stage1[j] { "yes" } else { "no" },
            opt(p.poc_high, 8),
            opt(p.poc_low, 8),
            opt(p.dose_opt, 8),
            flag(d.poc_high[j]),
            flag(d.poc_low[j]),
            flag(d.do_flag[j]),
            selection(d.final_selection[j])
        )
        .unwrap();
    }
    writeln!(
        s,
        "\n{:<14} {:>9} {:>8} {:>9} {:>9} {:>6} {:>7}",
        "parameter", "mean", "sd", "2.5%", "97.5%", "R-hat", "ESS"
    )
    .unwrap();
    for p in r.posterior_summaries.iter().chain(&r.derived_rates) {
        writeln!(
            s,
            "{:<14} {:>9.4} {:>8.4} {:>9.4} {:>9.4} {:>6.3} {:>7.0}",
            p.name, p.mean, p.sd, p.lower_95, p.upper_95, p.rhat, p.ess
        )
        .unwrap();
    }
    for w in &d.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    if !r.not_converged.is_empty() {
        writeln!(s, "warning: R-hat above threshold for {}", r.not_converged.join(", ")).unwrap();
    }
    s
}

pub fn scenarios(list: &[Scenario]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<16} {:<28} low-dose rates", "scenario", "high-dose rates").unwrap();
    for sc in list {
        let fmt = |row: &[f64]| row.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ");
        writeln!(
            s,
            "{:<16} {:<28} {}",
            sc.name,
            fmt(&sc.true_rates[0]),
            fmt(&sc.true_rates[1])
        )
        .unwrap();
    }
    s
}
