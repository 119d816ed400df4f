//! One function per subcommand. Each fills the shared artifact sink with
//! named checks, summary lines and plot-ready CSV data; `all` chains them
//! with fixed presets. Check names are prefixed with `tag` so aggregated
//! runs stay unambiguous.

use crate::artifacts::Artifacts;
use anyhow::{anyhow, bail, Context, Result};
use korn_core::decompose::{
    audit_decomposition, fit_log_slope, hardy_norm_estimate, partition_of_unity, random_w0_field,
    v_decompose_with,
};
use korn_core::fields::Quad;
use korn_core::geometry::Domain;
use korn_core::korn::{
    admissible_window, cusp_truncated_norms, deflation_completeness, korn_constant, CuspParams,
    KornOptions, KornReport,
};
use korn_core::report::CheckReport;
use korn_core::tree::{overlap_boxes, shadow_constant, shadows, verify_shadow_constant, RootedTree};
use korn_core::whitney::WhitneyCover;

pub fn load_domain(name: &str) -> Result<Domain> {
    if let Some(d) = Domain::builtin(name) {
        return Ok(d);
    }
    let text = std::fs::read_to_string(name)
        .with_context(|| format!("`{name}` is neither a builtin domain nor a readable file"))?;
    Domain::from_json(&text).map_err(|e| anyhow!("domain spec {name}: {e}"))
}

fn finite(name: String, measured: f64) -> CheckReport {
    CheckReport {
        name,
        pass: measured.is_finite(),
        measured,
        bound: f64::MAX,
    }
}

pub fn whitney(
    art: &mut Artifacts,
    tag: &str,
    domain_name: &str,
    max_level: u8,
    samples: usize,
    seed: u64,
) -> Result<()> {
    let domain = load_domain(domain_name)?;
    let cover = WhitneyCover::build(&domain, max_level).with_dists(&domain);
    let audit = cover.audit(&domain, samples, seed);
    art.note(format!(
        "{tag}cover of {domain_name} at level {max_level}: {} cubes, dist/diam in [{:.6}, {:.6}]",
        audit.cube_count, audit.ratio_min, audit.ratio_max
    ));
    art.check(CheckReport::ge(
        format!("{tag}cube count"),
        audit.cube_count as f64,
        1.0,
    ));
    art.check(CheckReport::ge(
        format!("{tag}distance ratio floor"),
        audit.ratio_min,
        1.0 - 1e-12,
    ));
    art.check(CheckReport::le(
        format!("{tag}distance ratio ceiling"),
        audit.ratio_max,
        4.0 + 1e-12,
    ));
    art.check(CheckReport::le(
        format!("{tag}cubes breaching the boundary"),
        audit.strictly_inside_failures as f64,
        0.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}nested accepted cubes"),
        audit.nested_violations as f64,
        0.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}interior overlaps"),
        audit.overlap_pairs as f64,
        0.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}neighbor level gap"),
        audit.max_neighbor_level_diff as f64,
        2.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}coverage gaps"),
        audit.coverage_failures as f64,
        0.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}extended cube overlap count"),
        audit.expanded_overlap_max as f64,
        audit.expanded_overlap_bound as f64,
    ));
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    art.jsonl(&format!("{prefix}cover.jsonl"), &cover.rows())?;
    let rows: Vec<String> = audit
        .level_histogram
        .iter()
        .map(|(l, c)| format!("{l},{c}"))
        .collect();
    art.csv(&format!("{prefix}levels.csv"), "level,count", &rows)?;
    art.attach(&format!("{prefix}cover_audit"), &audit)?;
    Ok(())
}

pub fn tree(art: &mut Artifacts, tag: &str, domain_name: &str, max_level: u8) -> Result<()> {
    let domain = load_domain(domain_name)?;
    let cover = WhitneyCover::build(&domain, max_level);
    let tr = RootedTree::build(&cover, None).with_context(|| format!("tree on {domain_name}"))?;
    let sh = shadows(&cover, &tr);
    let sc = shadow_constant(&cover, &tr, &sh);
    let ok = verify_shadow_constant(&cover, &tr, &sh, &sc, 1e-6);
    let (boxes, halvings) = overlap_boxes(&cover, &tr)?;
    let max_depth = tr.depth.iter().copied().max().unwrap_or(0);
    art.note(format!(
        "{tag}tree on {domain_name} level {max_level}: {} nodes, depth {max_depth}, K = {:.4} at node {}, {} boxes ({halvings} halvings)",
        cover.len(), sc.k, sc.witness, boxes.len()
    ));
    art.check(CheckReport::le(
        format!("{tag}nodes missed by traversal"),
        (cover.len() - tr.bfs_order.len()) as f64,
        0.0,
    ));
    art.check(CheckReport::ge(
        format!("{tag}shadow constant verified"),
        ok as u8 as f64,
        1.0,
    ));
    art.check(finite(format!("{tag}shadow constant"), sc.k));
    art.check(CheckReport::le(
        format!("{tag}boxes vs non-root nodes"),
        (boxes.len() as f64 - (cover.len() as f64 - 1.0)).abs(),
        0.0,
    ));
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    let rows: Vec<String> = (0..cover.len())
        .map(|t| {
            format!(
                "{t},{},{},{},{}",
                cover.cubes[t].level,
                tr.depth[t],
                tr.parent[t].map(|p| p as i64).unwrap_or(-1),
                sh.measure[t]
            )
        })
        .collect();
    art.csv(
        &format!("{prefix}shadows.csv"),
        "node,level,depth,parent,measure",
        &rows,
    )?;
    art.attach(&format!("{prefix}shadow_constant"), &sc)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn decompose(
    art: &mut Artifacts,
    tag: &str,
    domain_name: &str,
    max_level: u8,
    order: usize,
    fields: usize,
    q_list: &[f64],
    beta_list: &[f64],
    seed: u64,
) -> Result<()> {
    let domain = load_domain(domain_name)?;
    let cover = WhitneyCover::build(&domain, max_level);
    if cover.is_empty() {
        bail!("no admissible cubes for {domain_name} at level {max_level}");
    }
    let tr = RootedTree::build(&cover, None)?;
    let (boxes, _) = overlap_boxes(&cover, &tr)?;
    let quad = Quad::build(&cover, &boxes, order, Some(&domain));
    let pou = partition_of_unity(&quad, &cover);
    let sh = shadows(&cover, &tr);
    let k_shadow = shadow_constant(&cover, &tr, &sh).k;
    let region = vec![true; cover.len()];

    let mut recon = 0.0f64;
    let mut pairing = 0.0f64;
    let mut support = 0usize;
    let mut p11 = 0usize;
    let mut p12 = 0.0f64;
    let mut p12_ref = 0.0;
    let mut localized = true;
    let mut rows = Vec::new();
    for f in 0..fields {
        let g = random_w0_field(&quad, &cover, &region, seed.wrapping_add(f as u64));
        let dec = v_decompose_with(&quad, &cover, &tr, &boxes, &pou, &g)
            .map_err(|e| anyhow!("field {f}: {e}"))?;
        let audit = audit_decomposition(
            &quad, &cover, &tr, &boxes, &dec, &g, k_shadow, q_list, beta_list,
        );
        recon = recon.max(audit.reconstruction_rel);
        pairing = pairing.max(audit.pairing_rel_max);
        support += audit.support_violations;
        p11 += audit.p11_violations;
        p12 = p12.max(audit.p12_measured);
        p12_ref = audit.p12_reference;
        localized &= audit.localization_ok;
        for r in &audit.ratios {
            rows.push(format!(
                "{f},{},{},{},{},{},{}",
                r.q, r.beta, r.numerator, r.denominator, r.ratio, r.reference
            ));
        }
    }
    art.note(format!(
        "{tag}{fields} fields on {domain_name} level {max_level} ({} cubes), piece-mass envelope {:.3e} vs reference {:.3e}",
        cover.len(), p12, p12_ref
    ));
    art.check(CheckReport::le(
        format!("{tag}reconstruction defect"),
        recon,
        korn_core::tol::RECONSTRUCTION,
    ));
    art.check(CheckReport::le(
        format!("{tag}piece pairing residual"),
        pairing,
        korn_core::tol::PIECE_PAIRING,
    ));
    art.check(CheckReport::le(
        format!("{tag}support violations"),
        support as f64,
        0.0,
    ));
    art.check(CheckReport::le(
        format!("{tag}pointwise domination violations"),
        p11 as f64,
        0.0,
    ));
    art.check(CheckReport::ge(
        format!("{tag}pieces localized to the field support"),
        localized as u8 as f64,
        1.0,
    ));
    art.check(finite(format!("{tag}piece mass envelope"), p12));
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    art.csv(
        &format!("{prefix}ratios.csv"),
        "field,q,beta,numerator,denominator,ratio,reference",
        &rows,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn hardy(
    art: &mut Artifacts,
    tag: &str,
    domain_name: &str,
    max_level: u8,
    order: usize,
    q: f64,
    beta_list: &[f64],
    trials: usize,
    seed: u64,
) -> Result<()> {
    let domain = load_domain(domain_name)?;
    let cover = WhitneyCover::build(&domain, max_level);
    let tr = RootedTree::build(&cover, None)?;
    let (boxes, _) = overlap_boxes(&cover, &tr)?;
    let quad = Quad::build(&cover, &boxes, order, Some(&domain));
    let sh = shadows(&cover, &tr);
    let k = shadow_constant(&cover, &tr, &sh).k;

    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for &beta in beta_list {
        let rep = hardy_norm_estimate(&quad, &cover, &tr, &sh, &boxes, q, beta, trials, seed);
        art.check(finite(
            format!("{tag}operator norm at weight {beta}"),
            rep.lower_bound,
        ));
        bounds.push(rep.lower_bound);
        rows.push(format!(
            "{},{},{},{},{},{}",
            beta, q, rep.lower_bound, rep.power_iteration, rep.best_candidate, rep.random_max
        ));
    }
    if beta_list.len() >= 2 && bounds.iter().all(|&b| b > 0.0) {
        let slope = fit_log_slope(beta_list, &bounds);
        art.note(format!(
            "{tag}norm growth exponent {slope:.4} against shadow bound ln K = {:.4}",
            k.ln()
        ));
        art.check(CheckReport::le(
            format!("{tag}weight sweep growth rate"),
            slope,
            k.ln() * 1.15,
        ));
    }
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    art.csv(
        &format!("{prefix}hardy.csv"),
        "beta,q,lower_bound,power_iteration,best_candidate,random_max",
        &rows,
    )?;
    Ok(())
}

pub fn korn(
    art: &mut Artifacts,
    tag: &str,
    domain_name: &str,
    meshes: &[f64],
    beta: f64,
    seed: u64,
) -> Result<()> {
    let domain = load_domain(domain_name)?;
    let mut reports: Vec<KornReport> = Vec::new();
    let mut rows = Vec::new();
    for &h in meshes {
        let opts = KornOptions {
            beta,
            seed,
            ..KornOptions::default()
        };
        let rep = korn_constant(&domain, h, &opts)
            .map_err(|e| anyhow!("constant on {domain_name} at h = {h}: {e}"))?;
        art.check(CheckReport::le(
            format!("{tag}eigenresidual at h = {h}"),
            rep.residual,
            1e-8,
        ));
        art.check(CheckReport::ge(
            format!("{tag}constant floor at h = {h}"),
            rep.c,
            1.0 - 1e-9,
        ));
        rows.push(format!(
            "{},{},{},{},{},{}",
            rep.h, rep.c, rep.lambda_min, rep.residual, rep.iterations, rep.dofs
        ));
        reports.push(rep);
    }
    for w in reports.windows(2) {
        art.check(CheckReport::le(
            format!(
                "{tag}refinement drift {} to {}",
                w[0].h, w[1].h
            ),
            (w[0].c - w[1].c).abs() / w[1].c,
            0.05,
        ));
    }
    if let Some(&h0) = meshes.first() {
        let defl = deflation_completeness(&domain, h0, seed);
        art.note(format!(
            "{tag}{domain_name}: strain kernel split {:.3e} -> {:.3e} (ratio {:.3e}) at h = {h0}",
            defl.near_null.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
            defl.first_positive,
            defl.ratio
        ));
        art.check(CheckReport::ge(
            format!("{tag}kernel separation ratio"),
            defl.ratio,
            1e3,
        ));
        art.attach("deflation", &defl)?;
    }
    if let Some(last) = reports.last() {
        art.note(format!(
            "{tag}constant {:.6} at h = {} ({} dofs, {} iterations)",
            last.c, last.h, last.dofs, last.iterations
        ));
    }
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    art.csv(
        &format!("{prefix}constant.csv"),
        "h,c,lambda_min,residual,iterations,dofs",
        &rows,
    )?;
    art.attach("constant_reports", &reports)?;
    Ok(())
}

pub fn cusp(art: &mut Artifacts, tag: &str, gamma: f64, s: f64, eps_list: &[f64]) -> Result<()> {
    let params = CuspParams::new(gamma, s)?;
    let (lo, hi) = admissible_window(gamma);
    art.note(format!(
        "{tag}gamma = {gamma}, s = {s}, divergence window ({lo}, {hi})"
    ));
    art.check(CheckReport::ge(
        format!("{tag}exponent inside the divergence window"),
        params.admissible() as u8 as f64,
        1.0,
    ));
    let mut eps = eps_list.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).expect("finite truncations"));
    let mut rows = Vec::new();
    let mut grads = Vec::new();
    let mut strains = Vec::new();
    let mut logs = Vec::new();
    for &e in &eps {
        let n = cusp_truncated_norms(&params, e)?;
        rows.push(format!("{e},{},{},{}", n.dv_sq, n.l_sq, n.v_sq_box));
        grads.push(n.dv_sq);
        strains.push(n.l_sq);
        logs.push((1.0 / e).ln());
    }
    if grads.len() >= 2 {
        let min_growth = grads
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(f64::INFINITY, f64::min);
        art.check(CheckReport::ge(
            format!("{tag}gradient energy grows under release"),
            min_growth,
            1.0,
        ));
        let l_drift = (strains[strains.len() - 1] - strains[strains.len() - 2]).abs()
            / strains[strains.len() - 1];
        art.check(CheckReport::le(
            format!("{tag}strain energy settles"),
            l_drift,
            0.02,
        ));
    }
    if grads.len() >= 3 {
        let slope = fit_log_slope(&logs, &grads);
        let expect = -(2.0 * s + gamma + 1.0);
        art.note(format!(
            "{tag}divergence rate {slope:.4} against the exact exponent {expect}"
        ));
        art.check(CheckReport::le(
            format!("{tag}divergence rate error"),
            (slope - expect).abs(),
            0.03 * expect.abs().max(1e-12),
        ));
    }
    let stem = tag.trim_end_matches(' ').replace(' ', "_");
    let prefix = if stem.is_empty() {
        String::new()
    } else {
        format!("{stem}_")
    };
    art.csv(
        &format!("{prefix}cusp.csv"),
        "eps,grad_energy,strain_energy,box_mass",
        &rows,
    )?;
    Ok(())
}

/// Full battery under fixed presets; only the seed varies.
pub fn all(art: &mut Artifacts, seed: u64) -> Result<()> {
    for (dom, lvl) in [
        ("unit_square", 6),
        ("l_shape2d", 6),
        ("koch_level3", 6),
        ("unit_cube", 4),
        ("cusp_gamma2", 5),
    ] {
        whitney(art, &format!("whitney {dom} "), dom, lvl, 2000, seed)?;
    }
    tree(art, "tree l_shape2d ", "l_shape2d", 6)?;
    tree(art, "tree cusp_gamma2 ", "cusp_gamma2", 5)?;
    decompose(
        art,
        "decompose ",
        "l_shape3d",
        4,
        3,
        3,
        &[1.5, 2.0, 3.0],
        &[0.0, 1.0],
        seed,
    )?;
    hardy(
        art,
        "hardy ",
        "l_shape2d",
        6,
        3,
        2.0,
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        1000,
        seed,
    )?;
    korn(art, "korn ", "unit_cube", &[0.25, 0.125], 0.0, seed)?;
    cusp(art, "cusp ", 2.0, -2.0, &[1e-2, 1e-3, 1e-4])?;
    Ok(())
}
