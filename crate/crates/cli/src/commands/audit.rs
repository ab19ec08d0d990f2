use anyhow::Result;
use e2m::audit::{run_audit, AuditConfig};
use e2m::io::DataHeader;
use e2m::SpaceId;
use serde_json::json;

use super::{print_table, write_json, Outcome};
use crate::args::AuditArgs;
use crate::dispatch::with_space;
use crate::manifest::{manifest_for_file, Outputs};

fn default_size(id: SpaceId) -> usize {
    match id {
        SpaceId::Wasserstein1d => 100,
        SpaceId::Network => 10,
        SpaceId::SpdPower => 3,
        SpaceId::SpdBw => 2,
    }
}

fn status(ok: bool) -> String {
    if ok { "ok" } else { "VIOLATED" }.into()
}

pub fn audit(a: &AuditArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let id: SpaceId = a.space.parse()?;
    let size = a.size.unwrap_or(default_size(id));
    let mut h = DataHeader::new(id);
    match id {
        SpaceId::Wasserstein1d => h.m = Some(size),
        SpaceId::Network => h.v = Some(size),
        SpaceId::SpdPower | SpaceId::SpdBw => h.l = Some(size),
    }
    let cfg = AuditConfig {
        lipschitz_trials: a.trials,
        lipschitz_anchors: a.anchors,
        grad_instances: a.grad_instances,
        mean_instances: a.mean_instances,
        entropy_samples: a.entropy_samples,
        ..AuditConfig::default()
    };
    let report = with_space!(h, space => run_audit(&space, &cfg, seed)?);
    write_json(out, &a.out, &json!({ "report": report, "passed": report.passed() }))?;

    let mut rows = Vec::new();
    match &report.lipschitz {
        Some(l) => rows.push(vec![
            "lipschitz".into(),
            format!("{} violations / {} pairs, max ratio {:.4}", l.violations, l.trials, l.max_ratio),
            "ratio ≤ 1".into(),
            status(l.violations == 0),
        ]),
        None => rows.push(vec!["lipschitz".into(), "skipped".into(), "not Hadamard".into(), "-".into()]),
    }
    let g = &report.gradient;
    rows.push(vec![
        "gradient".into(),
        format!("max rel error {:.3e}", g.max_rel_error),
        format!("< {:e}", report.gradient_tolerance),
        status(g.max_rel_error < report.gradient_tolerance),
    ]);
    let m = &report.mean_oracle;
    rows.push(vec![
        "mean oracle".into(),
        format!("max gap {:.3e}", m.max_gap),
        format!("< {:e}", m.tolerance),
        status(m.max_gap < m.tolerance),
    ]);
    let e = &report.entropy;
    rows.push(vec![
        "entropy".into(),
        format!("H in [{:.3e}, {:.4}], max |grad| {:.3}", e.min_entropy, e.max_entropy, e.max_grad),
        format!("[{:.3e}, {:.4}], {:.3}", e.lower_bound, e.upper_bound, e.grad_bound),
        status(e.violations == 0),
    ]);
    println!("audit {} (size {size}, seed {seed})", report.space);
    print_table(&["check", "observed", "bound", "status"], &rows);
    println!("violations={}", report.violations);

    let mut outcome = Outcome::new(manifest_for_file(&a.out), json!({ "space": h, "config": cfg }));
    if !report.passed() {
        outcome.failure = Some(format!("audit found {} violation(s)", report.violations));
    }
    Ok(outcome)
}
