//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts. Tests hold a global
//! lock so timing-sensitive ones never share the CPU.

mod oracle;

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use htensor::arith::{self, RankTarget, TruncationControl};
use htensor::bench::{self, BenchBackend, BenchOp, BenchSpec, LeafSize};
use htensor::cookie::fem::{assemble_with_sigma, StructuredGrid};
use htensor::cookie::{CookieProblem, ProblemConfig, NUM_COOKIES};
use htensor::dist::WorkerTopology;
use htensor::htucker::storage_size_for;
use htensor::solvers::{cg_solve, multigrid_solve, Serial, SolverConfig};
use htensor::{
    DimensionTree, GeneralizedMatrix, HTOperator, HTensor, Matrix, OperatorNode, RankVector, Tensor3,
};
use oracle::{dense, dot, frames, hsvd, matricize, multi_indices, norm, operator_matrix, rel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn lock() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn verdict(n: usize, ok: bool, detail: &str) {
    report(&format!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" }));
    assert!(ok, "criterion {n} failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

const INSTANCES: u64 = 100;

/// `(d, n, k)` grid of the small oracle instances.
fn small_cases() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for d in 2..=5 {
        for n in 2..=4 {
            for k in 1..=3 {
                out.push((d, n, k));
            }
        }
    }
    out
}

fn random_tensor(tree: &Arc<DimensionTree>, n: usize, k: usize, seed: u64) -> HTensor {
    let sizes = vec![n; tree.d()];
    let ranks = RankVector::uniform(tree, k).clamped(tree, &sizes);
    HTensor::random(tree.clone(), &sizes, &ranks, seed).unwrap()
}

/// Operator of rank `r` with dense random leaf matrices.
fn random_operator(tree: &Arc<DimensionTree>, n: usize, r: usize, seed: u64) -> HTOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..tree.num_nodes())
        .map(|t| {
            if tree.is_leaf(t) {
                OperatorNode::Leaf((0..r).map(|_| GeneralizedMatrix::Dense(Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)))).collect())
            } else {
                let k = if t == 0 { 1 } else { r };
                OperatorNode::Transfer(Tensor3::from_fn([k, r, r], |_, _, _| rng.random_range(-1.0..1.0)))
            }
        })
        .collect();
    HTOperator::from_parts(tree.clone(), nodes).unwrap()
}

struct Instance {
    tree: Arc<DimensionTree>,
    sizes: Vec<usize>,
    a: HTensor,
    c: HTensor,
    op: HTOperator,
    k: usize,
}

fn for_each_instance(mut f: impl FnMut(&Instance)) {
    for (d, n, k) in small_cases() {
        let tree = Arc::new(DimensionTree::balanced(d).unwrap());
        for i in 0..INSTANCES {
            let seed = ((d * 100 + n * 10 + k) as u64) << 20 | i;
            let inst = Instance {
                a: random_tensor(&tree, n, k, seed),
                c: random_tensor(&tree, n, 1 + (i as usize) % k, seed ^ 0xABCD),
                op: random_operator(&tree, n, 1 + (i as usize) % 2, seed ^ 0x1234),
                sizes: vec![n; d],
                tree: tree.clone(),
                k,
            };
            f(&inst);
        }
    }
}

#[derive(Default)]
struct Worst(f64);

impl Worst {
    fn see(&mut self, v: f64) {
        self.0 = if v.is_nan() { f64::INFINITY } else { self.0.max(v) };
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let _g = lock();
    let start = Instant::now();
    let (mut eval, mut inner, mut add, mut apply, mut orth, mut trunc) =
        (Worst::default(), Worst::default(), Worst::default(), Worst::default(), Worst::default(), Worst::default());
    let mut count = 0;
    for_each_instance(|x| {
        count += 1;
        let da = dense(&x.a);
        let dc = dense(&x.c);
        let scale = da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (lin, idx) in multi_indices(&x.sizes).iter().enumerate() {
            eval.see((arith::evaluate_entry(&x.a, idx).unwrap() - da[lin]).abs() / scale);
        }
        inner.see((arith::inner_product(&x.a, &x.c).unwrap() - dot(&da, &dc)).abs() / (norm(&da) * norm(&dc)));
        let sum: Vec<f64> = da.iter().zip(&dc).map(|(p, q)| p + q).collect();
        add.see(rel(&dense(&arith::add(&x.a, &x.c).unwrap()), &sum));
        apply.see(rel(&dense(&arith::apply_operator(&x.op, &x.a).unwrap()), &operator_matrix(&x.op).matvec(&da)));
        orth.see(rel(&dense(&arith::orthogonalize(&x.a)), &da));
        let r = x.k.saturating_sub(1).max(1);
        let ranks = x.a.ranks();
        let want = hsvd(&da, &x.sizes, &x.tree, |t| r.min(ranks.get(t)));
        trunc.see(rel(&dense(&arith::truncate(&x.a, &TruncationControl::uniform(r)).unwrap()), &want));
    });
    let secs = start.elapsed().as_secs_f64();
    let worst = [eval.0, inner.0, add.0, apply.0, orth.0, trunc.0];
    let ok = worst.iter().all(|&e| e <= 1e-10) && secs < 60.0;
    verdict(
        1,
        ok,
        &format!(
            "{count} instances in {secs:.1} s; worst relative errors evaluate {:.1e}, inner {:.1e}, add {:.1e}, apply {:.1e}, orthogonalize {:.1e}, truncate {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    );
}

#[test]
fn criterion_02_orthogonality_contract() {
    let _g = lock();
    let (mut defect, mut change) = (Worst::default(), Worst::default());
    for_each_instance(|x| {
        let o = arith::orthogonalize(&x.a);
        let f = frames(&o);
        for (t, u) in f.iter().enumerate().skip(1) {
            let g = u.t_matmul(u).sub(&Matrix::identity(x.a.rank(t))).unwrap();
            defect.see(g.max_abs());
        }
        change.see(rel(f[0].data(), &dense(&x.a)));
    });
    let ok = defect.0 <= 1e-10 && change.0 <= 1e-11;
    verdict(2, ok, &format!("max ‖FᵀF − I‖_max = {:.1e}, tensor change {:.1e} relative", defect.0, change.0));
}

#[test]
fn criterion_03_gram_matrices() {
    let _g = lock();
    let (mut gram, mut trace) = (Worst::default(), Worst::default());
    for_each_instance(|x| {
        let o = arith::orthogonalize(&x.a);
        let f = frames(&o);
        let da = f[0].data().to_vec();
        let nrm2 = dot(&da, &da);
        let bhat = arith::compute_bhat(&o).unwrap();
        for t in 1..x.tree.num_nodes() {
            let v = matricize(&da, &x.sizes, x.tree.dims(t)).t_matmul(&f[t]);
            let want = v.t_matmul(&v);
            gram.see(bhat[t].sub(&want).unwrap().max_abs() / nrm2);
            trace.see((bhat[t].trace() - nrm2).abs() / nrm2);
        }
    });
    let ok = gram.0 <= 1e-10 && trace.0 <= 1e-10;
    verdict(3, ok, &format!("max |B̂ − VᵀV| / ‖A‖² = {:.1e}, trace defect {:.1e} relative", gram.0, trace.0));
}

#[test]
fn criterion_04_truncation_bounds() {
    let _g = lock();
    let (mut worst_ratio, mut recovery, mut rank_mismatch) = (0.0f64, Worst::default(), 0);
    for_each_instance(|x| {
        let da = dense(&x.a);
        let na = norm(&da);
        for frac in [0.5, 0.1, 0.01] {
            let eps = frac * na;
            let t = arith::truncate(&x.a, &TruncationControl::accuracy(eps, None)).unwrap();
            let diff: Vec<f64> = dense(&t).iter().zip(&da).map(|(p, q)| p - q).collect();
            worst_ratio = worst_ratio.max(norm(&diff) / eps);
        }
        let ranks = x.a.ranks();
        let doubled = arith::add(&x.a, &x.a).unwrap();
        let t = arith::truncate(&doubled, &TruncationControl::FixedRank(RankTarget::PerNode(ranks.clone()))).unwrap();
        let twice: Vec<f64> = da.iter().map(|v| 2.0 * v).collect();
        recovery.see(rel(&dense(&t), &twice));
        if t.ranks() != ranks {
            rank_mismatch += 1;
        }
    });
    let ok = worst_ratio <= 1.0 && recovery.0 <= 1e-10 && rank_mismatch == 0;
    verdict(
        4,
        ok,
        &format!("max ‖A − T_ε(A)‖/ε = {worst_ratio:.3}; T(A + A) at ranks(A) vs 2A {:.1e} relative, {rank_mismatch} rank mismatches", recovery.0),
    );
}

/// Stored floats counted from the ranks alone.
fn storage_formula(tree: &DimensionTree, sizes: &[usize], ranks: &[usize]) -> usize {
    let mut total = 0;
    for t in 0..tree.num_nodes() {
        total += match tree.sons(t) {
            None => sizes[tree.dims(t).start] * ranks[t],
            Some([a, b]) => ranks[t] * ranks[a] * ranks[b],
        };
    }
    total
}

#[test]
fn criterion_05_rank_laws_and_storage() {
    let _g = lock();
    let mut violations = Vec::new();
    for_each_instance(|x| {
        let (ra, rc, ro) = (x.a.ranks(), x.c.ranks(), x.op.ranks());
        let s = arith::add(&x.a, &x.c).unwrap();
        let y = arith::apply_operator(&x.op, &x.a).unwrap();
        for t in 0..x.tree.num_nodes() {
            let want_sum = if t == 0 { 1 } else { ra.get(t) + rc.get(t) };
            if s.rank(t) != want_sum || y.rank(t) != ra.get(t) * ro[t] {
                violations.push(format!("d={} node {t}", x.tree.d()));
            }
        }
        for h in [&x.a, &s, &y] {
            if h.storage_size() != storage_formula(&x.tree, h.sizes(), h.ranks().as_slice()) {
                violations.push(format!("storage at d={}", x.tree.d()));
            }
        }
    });
    let t8 = DimensionTree::balanced(8).unwrap();
    let big = storage_size_for(&t8, &[10_000; 8], &RankVector::uniform(&t8, 100));
    let t10 = DimensionTree::balanced(10).unwrap();
    let mut sizes = vec![10; NUM_COOKIES];
    sizes.push(StructuredGrid::new(0).num_inner());
    let cap = RankVector::uniform(&t10, 50);
    let cookie_nominal = storage_formula(&t10, &sizes, cap.as_slice());
    let cookie = storage_size_for(&t10, &sizes, &cap.clamped(&t10, &sizes));
    let ok = violations.is_empty() && big == 14_010_000 && cookie_nominal == 1_008_800 && cookie <= 1_008_800;
    verdict(
        5,
        ok,
        &format!(
            "{} rank/storage violations; storage(d=8, n=1e4, k=100) = {big}; cookie at cap 50: {cookie} stored ({cookie_nominal} before rank clamping)",
            violations.len()
        ),
    );
}

#[test]
fn criterion_06_distributed_equivalence() {
    let _g = lock();
    let tree = Arc::new(DimensionTree::balanced(8).unwrap());
    let topo = WorkerTopology::spawn(tree.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = Worst::default();
    let mut traffic = 0u64;
    let before = topo.counters();
    for seed in 0..20u64 {
        let (n, k) = (3, 2 + (seed as usize) % 2);
        let a = random_tensor(&tree, n, k, 600 + seed);
        let c = random_tensor(&tree, n, 2, 700 + seed);
        let op = random_operator(&tree, n, 2, 800 + seed);
        let (ha, hc) = (topo.scatter(&a).unwrap(), topo.scatter(&c).unwrap());
        let hop = topo.scatter_operator(&op).unwrap();
        let same = |x: &HTensor, y: &HTensor| rel(&dense(x), &dense(y));

        for _ in 0..5 {
            let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..n)).collect();
            let want = arith::evaluate_entry(&a, &idx).unwrap();
            worst.see((topo.evaluate(&ha, &idx).unwrap() - want).abs() / want.abs().max(1e-300));
        }
        let want = arith::inner_product(&a, &c).unwrap();
        worst.see((topo.inner_product(&ha, &hc).unwrap() - want).abs() / (arith::norm(&a) * arith::norm(&c)));
        worst.see(same(&topo.gather(&topo.orthogonalize(&ha).unwrap()).unwrap(), &arith::orthogonalize(&a)));
        for ctl in [TruncationControl::uniform(2), TruncationControl::accuracy(0.1 * arith::norm(&a), Some(3))] {
            worst.see(same(&topo.gather(&topo.truncate(&ha, &ctl).unwrap()).unwrap(), &arith::truncate(&a, &ctl).unwrap()));
        }
        worst.see(same(&topo.gather(&topo.scale(&ha, -1.5).unwrap()).unwrap(), &arith::scale(&a, -1.5)));
        let m = GeneralizedMatrix::Dense(Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)));
        let mu = (seed as usize) % 8;
        worst.see(same(&topo.gather(&topo.map_leaf(&ha, mu, &m).unwrap()).unwrap(), &arith::map_leaf(&a, mu, &m).unwrap()));

        let sum = topo.add(&ha, &hc).unwrap();
        traffic += topo.last_stats().messages;
        let y = topo.apply_operator(&hop, &ha).unwrap();
        traffic += topo.last_stats().messages;
        worst.see(same(&topo.gather(&sum).unwrap(), &arith::add(&a, &c).unwrap()));
        worst.see(same(&topo.gather(&y).unwrap(), &arith::apply_operator(&op, &a).unwrap()));
    }
    let counts = topo.counters().since(&before);
    let mut links = topo.links();
    links.sort();
    let mut edges = tree.edges();
    edges.sort();
    let ok = worst.0 <= 1e-10 && traffic == 0 && counts.rejected == 0 && links == edges;
    verdict(
        6,
        ok,
        &format!(
            "worst dist/serial difference {:.1e}; add+apply tree messages {traffic}; {} tree messages elsewhere, {} refused; links are exactly the {} tree edges: {}",
            worst.0,
            counts.total,
            counts.rejected,
            edges.len(),
            links == edges
        ),
    );
}

fn bench_medians(spec: &BenchSpec, key: impl Fn(&bench::BenchRow) -> usize) -> (Vec<usize>, Vec<f64>) {
    let rows = bench::run_bench(spec, Some(bench::DEFAULT_MEMORY_LIMIT)).unwrap();
    bench::medians_by(&rows, key).into_iter().unzip()
}

#[test]
fn criterion_07_scaling_shapes() {
    let _g = lock();
    let mut lines = Vec::new();
    let mut ok = true;
    let ds = vec![8, 16, 32, 64, 128, 256];
    for op in [BenchOp::InnerProduct, BenchOp::Truncate, BenchOp::ApplyOperator] {
        let mut spec = BenchSpec::new(op, ds.clone(), 1024, vec![30]);
        spec.backend = BenchBackend::Dist;
        let (d, t) = bench_medians(&spec, |r| r.d);
        let fit = bench::fit_log2(&d, &t).unwrap();
        let (pass, what) = if op == BenchOp::ApplyOperator {
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            let rel_slope = fit.slope.abs() / mean;
            (rel_slope <= 0.05, format!("|slope per doubling of d| / mean = {:.3}", rel_slope))
        } else {
            (fit.r2 >= 0.9, format!("a + b·log₂ d fit R² = {:.3}", fit.r2))
        };
        ok &= pass;
        lines.push(format!("{op} d-sweep {}: {what} (medians {})", if pass { "pass" } else { "fail" }, sci(&t)));
    }
    let ks = vec![10, 20, 30, 40, 50, 60];
    let sweeps = [
        (BenchOp::InnerProduct, ks.clone(), (3.3, 4.7)),
        (BenchOp::Truncate, ks.clone(), (3.3, 4.7)),
        (BenchOp::Evaluate, ks.clone(), (2.3, 3.7)),
        (BenchOp::ApplyOperator, vec![3, 4, 5, 6, 8, 10], (5.0, 7.0)),
    ];
    for (op, ks, (lo, hi)) in sweeps {
        let mut spec = BenchSpec::new(op, vec![64], 1, ks);
        spec.n = LeafSize::MatchRank;
        spec.op_rank = None;
        let (k, t) = bench_medians(&spec, |r| r.k);
        let p = bench::fit_power(&k, &t).unwrap().slope;
        let pass = (lo..=hi).contains(&p);
        ok &= pass;
        lines.push(format!("{op} k-exponent {}: {p:.2} over k = {k:?}, target [{lo}, {hi}]", if pass { "pass" } else { "fail" }));
    }
    for l in &lines {
        report(&format!("  {l}"));
    }
    verdict(7, ok, &format!("{} of {} scaling checks within target", lines.iter().filter(|l| l.contains(" pass")).count(), lines.len()));
}

#[test]
fn criterion_08_cookie_fidelity() {
    let _g = lock();
    let counts: Vec<usize> = (0..4).map(|l| StructuredGrid::new(l).num_inner()).collect();
    let problem = CookieProblem::new(ProblemConfig { max_level: 3, ..ProblemConfig::default() }).unwrap();
    let mut galerkin = 0.0f64;
    for l in 1..4 {
        let p = problem.level(l).unwrap().prolongation.as_ref().unwrap();
        let pt = p.transpose();
        for (af, ac) in problem.level(l).unwrap().matrices.iter().zip(&problem.level(l - 1).unwrap().matrices) {
            let g = pt.matmul(&af.matmul(p).unwrap()).unwrap().to_dense();
            let want = ac.to_dense();
            galerkin = galerkin.max(g.sub(&want).unwrap().max_abs() / want.max_abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let [lo, hi] = problem.config().parameter_range;
    let mut sigma = 0.0f64;
    for _ in 0..5 {
        let alpha: Vec<f64> = (0..NUM_COOKIES).map(|_| rng.random_range(lo..=hi)).collect();
        for l in 0..2 {
            let lv = problem.level(l).unwrap();
            let direct = assemble_with_sigma(lv.grid, problem.config().element, &alpha).unwrap().to_dense();
            let affine = problem.dense_operator(l, &alpha).unwrap();
            sigma = sigma.max(direct.sub(&affine).unwrap().max_abs() / direct.max_abs());
        }
    }
    let coarse = CookieProblem::new(ProblemConfig::default()).unwrap();
    let est = coarse.estimate_lambda_max(&Serial, 0, &coarse.solver_config(20), 8).unwrap();
    let ok = counts == [36, 169, 729, 3025] && galerkin <= 1e-12 && sigma <= 1e-12 && (est.lambda - 11.0).abs() <= 0.2 * 11.0;
    verdict(
        8,
        ok,
        &format!(
            "inner points {counts:?}; Galerkin defect {galerkin:.1e}; affine vs direct assembly {sigma:.1e}; power iteration λ_max = {:.3} after {} iterations",
            est.lambda, est.iterations
        ),
    );
}

fn exact_config(steps: usize) -> SolverConfig {
    SolverConfig { truncation: TruncationControl::accuracy(1e-13, None), max_cg_steps: steps, eps_stop: 1e-13, ..SolverConfig::default() }
}

/// Dense CG from `x_0 = b`, returning the iterate and the relative residual history.
fn dense_cg(a: &Matrix, b: &[f64], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let axpy = |alpha: f64, x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| alpha * p + q).collect() };
    let mut x = b.to_vec();
    let mut r = axpy(-1.0, &a.matvec(&x), b);
    let mut d = r.clone();
    let mut hist = vec![norm(&r) / norm(b)];
    for _ in 0..steps {
        let z = a.matvec(&d);
        let alpha = dot(&r, &r) / dot(&d, &z);
        x = axpy(alpha, &d, &x);
        let r_next = axpy(-alpha, &z, &r);
        let beta = dot(&r_next, &r_next) / dot(&r, &r);
        d = axpy(beta, &d, &r_next);
        r = r_next;
        hist.push(norm(&r) / norm(b));
    }
    (x, hist)
}

#[test]
fn criterion_09_truncated_cg() {
    let _g = lock();
    let start = Instant::now();
    let caps = [20, 30, 40, 50];
    let problem = CookieProblem::new(ProblemConfig { caps: caps.to_vec(), ..ProblemConfig::default() }).unwrap();
    let op = problem.operator(0).unwrap();
    let b = problem.rhs_tensor(0).unwrap();
    let mut floors = Vec::new();
    for &cap in &caps {
        let out = cg_solve(&Serial, &op, &b, &problem.solver_config(cap)).unwrap();
        report(&format!("  cap {cap}: floor {:.3e} over {} steps{}", out.trace.floor(), out.trace.len() - 1, out.trace.breakdown.as_ref().map(|m| format!(" ({m})")).unwrap_or_default()));
        floors.push(out.trace.floor());
    }
    let monotone = floors.windows(2).all(|w| w[1] <= w[0]);

    // Identity operators: X_0 = B is already the solution, and 2·I needs one step.
    let tree = Arc::new(DimensionTree::balanced(3).unwrap());
    let sizes = [3, 4, 5];
    let rhs = HTensor::random(tree.clone(), &sizes, &RankVector::uniform(&tree, 2).clamped(&tree, &sizes), 9).unwrap();
    let id = HTOperator::identity(tree.clone(), &sizes).unwrap();
    let two = HTOperator::rank_one(tree.clone(), vec![GeneralizedMatrix::Diagonal(vec![2.0; 3]), GeneralizedMatrix::identity(4), GeneralizedMatrix::identity(5)]).unwrap();
    let id_steps = cg_solve(&Serial, &id, &rhs, &exact_config(10)).unwrap().trace;
    let two_steps = cg_solve(&Serial, &two, &rhs, &exact_config(10)).unwrap().trace;
    let identity_ok = id_steps.len() <= 2
        && id_steps.last().unwrap().true_rel_residual <= 1e-12
        && two_steps.len() == 2
        && two_steps.last().unwrap().true_rel_residual <= 1e-12;

    // d = 2: parameter dimension of size 4 times the coarse spatial grid.
    let tree2 = Arc::new(DimensionTree::balanced(2).unwrap());
    let lv = problem.level(0).unwrap();
    let (a0, a1) = (&lv.matrices[0], &lv.matrices[1]);
    let diag = vec![0.5, 0.8, 1.1, 1.5];
    let leaves = [
        OperatorNode::Leaf(vec![GeneralizedMatrix::identity(4), GeneralizedMatrix::Diagonal(diag.clone())]),
        OperatorNode::Leaf(vec![GeneralizedMatrix::Sparse(a0.clone()), GeneralizedMatrix::Sparse(a1.clone())]),
    ];
    let mut root = Tensor3::zeros([1, 2, 2]);
    root.set(0, 0, 0, 1.0);
    root.set(0, 1, 1, 1.0);
    assert_eq!(tree2.sons(0), Some([1, 2]));
    let [l0, l1] = leaves;
    let op2 = HTOperator::from_parts(tree2.clone(), vec![OperatorNode::Transfer(root), l0, l1]).unwrap();
    let b2 = HTensor::rank_one(tree2.clone(), &[vec![1.0; 4], lv.rhs.clone()]).unwrap();
    let a_dense = operator_matrix(&op2);
    let mut d2 = 0.0f64;
    for steps in [3, 8, 15] {
        let out = cg_solve(&Serial, &op2, &b2, &exact_config(steps)).unwrap();
        let (x, hist) = dense_cg(&a_dense, &dense(&b2), steps);
        d2 = d2.max(rel(&dense(&out.x), &x));
        for (e, h) in out.trace.entries.iter().zip(&hist) {
            d2 = d2.max((e.true_rel_residual - h).abs());
        }
    }
    let ok = monotone && identity_ok && d2 <= 1e-8;
    verdict(
        9,
        ok,
        &format!(
            "floors {} non-increasing: {monotone}; identity solved with {} step(s), 2·I with {}; d = 2 vs dense CG {d2:.1e}; {:.0} s",
            sci(&floors),
            id_steps.len() - 1,
            two_steps.len() - 1,
            start.elapsed().as_secs_f64()
        ),
    );
}

/// Largest relative change between successive reduction factors while the
/// residual is still above 1.5 times its floor, with the number of factors.
fn ratio_variation(res: &[f64]) -> (f64, usize) {
    let floor = res.iter().copied().fold(f64::INFINITY, f64::min);
    let ratios: Vec<f64> = res.windows(2).take_while(|w| w[1] > 1.5 * floor).map(|w| w[1] / w[0]).collect();
    let var = ratios.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    (var, ratios.len())
}

#[test]
fn criterion_10_multigrid() {
    let _g = lock();
    let start = Instant::now();
    let caps = [20, 30, 40, 50, 60, 70];
    let config = ProblemConfig { max_level: 3, points_per_parameter: 3, caps: caps.to_vec(), mg_cycles: 10, ..ProblemConfig::default() };
    let problem = CookieProblem::new(config).unwrap();
    let b = problem.rhs_tensor(3).unwrap();
    let mut floors = Vec::new();
    let mut variation = Vec::new();
    for &cap in &caps {
        let cfg = problem.solver_config(cap);
        let h = problem.hierarchy(&Serial, &cfg).unwrap();
        let trace = multigrid_solve(&Serial, &h, &b, &cfg, 10).unwrap().trace;
        let res: Vec<f64> = trace.entries.iter().map(|e| e.true_rel_residual).collect();
        let (var, n) = ratio_variation(&res);
        report(&format!(
            "  cap {cap}: residuals {}, ratio variation {var:.2} over {n} pre-floor factors, {:.0} s{}",
            sci(&res),
            trace.last().unwrap().seconds,
            trace.breakdown.as_ref().map(|m| format!(" ({m})")).unwrap_or_default()
        ));
        floors.push(trace.floor());
        if cap == 30 || cap == 50 {
            variation.push((cap, var, n));
        }
    }
    let linear = variation.iter().all(|&(_, v, n)| n >= 2 && v < 0.5);
    let improves = floors[3] < floors[1];
    let monotone = floors.windows(2).all(|w| w[1] <= w[0]);
    let ok = linear && improves && monotone;
    verdict(
        10,
        ok,
        &format!(
            "ratio variation {:?}; floor(50) = {:.2e} vs floor(30) = {:.2e}; floors over caps {caps:?}: {} non-increasing: {monotone}; {:.0} s on this machine",
            variation.iter().map(|&(c, v, _)| format!("cap {c}: {v:.2}")).collect::<Vec<_>>(),
            floors[3],
            floors[1],
            sci(&floors),
            start.elapsed().as_secs_f64()
        ),
    );
}
