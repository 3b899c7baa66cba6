//! Acceptance criteria, one test per criterion. Each test prints a single
//! `PASS`/`FAIL` line (visible with `--nocapture`) before asserting.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rankshape_core::estimators::{tyler_residual, RankScatter, SphericityTester};
use rankshape_core::harness::{ks_two_sample, SimLocation};
use rankshape_core::onestep::OneStepPath;
use rankshape_core::radial_scores::{
    chi2_cdf, chi2_quantile, f_cdf, f_quantile, gamma_cdf, gamma_quantile, score_centering_identity_check,
};
use rankshape_core::*;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn zero(k: usize) -> DVector<f64> {
    DVector::zeros(k)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Printed efficiencies: rows k = 2, 3, 4, 6, 10; columns t0, t0.5, t3, t10, N
/// against Tyler, then t10 and N against the Gaussian estimator.
struct PrintedRow {
    scores: ScoreFamily,
    k: usize,
    vs_tyler: [f64; 5],
    vs_gaussian: [f64; 2],
}

fn printed_table() -> Vec<PrintedRow> {
    let raw: [(ScoreFamily, [(usize, [f64; 5], [f64; 2]); 5]); 4] = [
        (
            ScoreFamily::Student(0.5),
            [
                (2, [0.900, 1.111, 1.246, 1.280, 1.296], [0.853, 0.648]),
                (3, [0.943, 1.061, 1.145, 1.173, 1.189], [0.939, 0.713]),
                (4, [0.963, 1.038, 1.098, 1.121, 1.136], [0.996, 0.757]),
                (6, [0.981, 1.020, 1.054, 1.070, 1.083], [1.070, 0.813]),
                (10, [0.992, 1.008, 1.024, 1.034, 1.044], [1.149, 0.870]),
            ],
        ),
        (
            ScoreFamily::Student(3.0),
            [
                (2, [0.700, 0.969, 1.429, 1.651, 1.792], [1.101, 0.896]),
                (3, [0.800, 0.972, 1.250, 1.400, 1.507], [1.120, 0.904]),
                (4, [0.857, 0.977, 1.667, 1.278, 1.366], [1.136, 0.911]),
                (6, [0.917, 0.985, 1.091, 1.162, 1.229], [1.162, 0.921]),
                (10, [0.962, 0.992, 1.040, 1.078, 1.123], [1.198, 0.936]),
            ],
        ),
        (
            ScoreFamily::Student(10.0),
            [
                (2, [0.583, 0.829, 1.376, 1.714, 1.961], [1.143, 0.980]),
                (3, [0.692, 0.861, 1.212, 1.444, 1.633], [1.156, 0.979]),
                (4, [0.762, 0.887, 1.136, 1.313, 1.468], [1.167, 0.979]),
                (6, [0.844, 0.921, 1.070, 1.185, 1.304], [1.185, 0.978]),
                (10, [0.917, 0.955, 1.027, 1.091, 1.174], [1.212, 0.978]),
            ],
        ),
        (
            ScoreFamily::VanDerWaerden,
            [
                (2, [0.500, 0.720, 1.280, 1.681, 2.000], [1.120, 1.000]),
                (3, [0.600, 0.757, 1.130, 1.415, 1.667], [1.132, 1.000]),
                (4, [0.667, 0.786, 1.063, 1.285, 1.500], [1.142, 1.000]),
                (6, [0.750, 0.829, 1.005, 1.159, 1.333], [1.159, 1.000]),
                (10, [0.833, 0.877, 0.973, 1.067, 1.200], [1.186, 1.000]),
            ],
        ),
    ];
    raw.into_iter()
        .flat_map(|(scores, rows)| {
            rows.into_iter().map(move |(k, vs_tyler, vs_gaussian)| PrintedRow { scores, k, vs_tyler, vs_gaussian })
        })
        .collect()
}

/// Printed cells excluded from the tolerance check as suspected misprints.
fn is_flagged_typo(scores: ScoreFamily, k: usize, column: usize) -> bool {
    scores == ScoreFamily::Student(3.0) && k == 4 && column == 2
}

#[test]
fn criterion_1_efficiency_table() {
    let unders = [
        RadialFamily::Student(0.5),
        RadialFamily::Student(3.0),
        RadialFamily::Student(10.0),
        RadialFamily::Gaussian,
    ];
    let scores = [ScoreFamily::Student(0.5), ScoreFamily::Student(3.0), ScoreFamily::Student(10.0), ScoreFamily::VanDerWaerden];
    let cells = are_table(&[2, 3, 4, 6, 10], &scores, &unders, true, &quad()).unwrap();
    let columns: Vec<Underlying> = std::iter::once(Underlying::StudentLimitZero)
        .chain(unders.iter().map(|&g| Underlying::Law(g)))
        .collect();

    let tol = 0.002;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    let mut misses = Vec::new();
    let mut flagged = Vec::new();
    for row in printed_table() {
        for (c, &printed) in row.vs_tyler.iter().enumerate() {
            let cell = cells.iter().find(|x| x.scores == row.scores && x.k == row.k && x.under == columns[c]).unwrap();
            let dev = (cell.vs_tyler - printed).abs();
            if is_flagged_typo(row.scores, row.k, c) {
                flagged.push(format!(
                    "{} k={} under {}: printed {printed:.3}, computed {:.3}",
                    row.scores, row.k, columns[c], cell.vs_tyler
                ));
                continue;
            }
            checked += 1;
            worst = worst.max(dev);
            if dev > tol {
                misses.push(format!("{} k={} {} vs Tyler: printed {printed}, computed {:.4}", row.scores, row.k, columns[c], cell.vs_tyler));
            }
            // heavy-tailed columns have no finite efficiency against the Gaussian estimator
            if c < 3 && !cell.vs_gaussian.is_infinite() {
                misses.push(format!("{} k={} {} vs Gaussian should be infinite", row.scores, row.k, columns[c]));
            }
        }
        for (j, &printed) in row.vs_gaussian.iter().enumerate() {
            let under = columns[3 + j];
            let cell = cells.iter().find(|x| x.scores == row.scores && x.k == row.k && x.under == under).unwrap();
            let dev = (cell.vs_gaussian.value() - printed).abs();
            checked += 1;
            worst = worst.max(dev);
            if dev > tol {
                misses.push(format!("{} k={} {} vs Gaussian: printed {printed}, computed {:.4}", row.scores, row.k, under, cell.vs_gaussian));
            }
        }
    }
    for f in &flagged {
        println!("  flagged cell (excluded): {f}");
    }
    for m in &misses {
        println!("  miss: {m}");
    }
    let anchors = [
        (ScoreFamily::VanDerWaerden, Underlying::Law(RadialFamily::Gaussian), 2.000),
        (ScoreFamily::Student(3.0), Underlying::Law(RadialFamily::Student(3.0)), 1.429),
        (ScoreFamily::Student(3.0), Underlying::StudentLimitZero, 0.700),
    ];
    let anchors_ok = anchors.iter().all(|&(f, u, v)| {
        let cell = cells.iter().find(|x| x.scores == f && x.k == 2 && x.under == u).unwrap();
        (cell.vs_tyler - v).abs() <= tol
    });
    let pass = misses.is_empty() && anchors_ok;
    report(1, pass, &format!("{checked} printed entries within ±{tol} (max deviation {worst:.5}), {} flagged", flagged.len()));
    assert!(pass, "{misses:?}");
}

#[test]
fn criterion_2_closed_forms() {
    let mut worst_j = 0.0_f64;
    for k in 2..=10 {
        let j = cross_info(ScoreFamily::VanDerWaerden, RadialFamily::Gaussian, k, &quad()).unwrap();
        worst_j = worst_j.max((j - (k * (k + 2)) as f64).abs());
    }
    let families = [
        ScoreFamily::VanDerWaerden,
        ScoreFamily::Student(0.5),
        ScoreFamily::Student(3.0),
        ScoreFamily::Student(10.0),
        ScoreFamily::PowerExponential(0.5),
        ScoreFamily::PowerExponential(3.0),
        ScoreFamily::PowerExponential(5.0),
        ScoreFamily::Constant,
    ];
    let mut worst_mean = 0.0_f64;
    for f in families {
        for k in [2, 3, 4, 6, 10] {
            let m = score_centering_identity_check(f, k, &quad()).unwrap();
            worst_mean = worst_mean.max((m - k as f64).abs());
        }
    }
    let probs = [1e-6, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0 - 1e-6];
    let mut worst_rt = 0.0_f64;
    for &u in &probs {
        for df in [1.0, 2.0, 3.0, 5.0, 10.0, 30.0] {
            worst_rt = worst_rt.max((chi2_cdf(df, chi2_quantile(df, u).unwrap()) - u).abs());
        }
        for shape in [0.2, 0.5, 1.0, 2.5, 7.0] {
            worst_rt = worst_rt.max((gamma_cdf(shape, gamma_quantile(shape, u).unwrap()) - u).abs());
        }
        for (d1, d2) in [(2.0, 4.0), (2.0, 0.5), (3.0, 3.0), (4.0, 10.0), (10.0, 1.0)] {
            worst_rt = worst_rt.max((f_cdf(d1, d2, f_quantile(d1, d2, u).unwrap()) - u).abs());
        }
    }
    let pass = worst_j <= 1e-6 && worst_mean <= 1e-6 && worst_rt <= 1e-10;
    report(
        2,
        pass,
        &format!("|J-k(k+2)| {worst_j:.1e}, |∫K-k| {worst_mean:.1e}, round trip {worst_rt:.1e}"),
    );
    assert!(pass);
}

fn random_invertible(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-2.0..2.0));
        let sv = m.clone().singular_values();
        if sv.min() > 0.2 {
            return m;
        }
    }
}

#[test]
fn criterion_3_tyler_contract() {
    let families = [RadialFamily::Gaussian, RadialFamily::Student(3.0), RadialFamily::Student(0.5)];
    let mut runs = 0;
    let mut worst_res = 0.0_f64;
    let mut failures = 0;
    'outer: for rep in 0..1000u64 {
        let fam = families[(rep % 3) as usize];
        let k = [2, 3, 4][((rep / 3) % 3) as usize];
        let n = [50, 250][((rep / 9) % 2) as usize];
        let data = sample(&RadialModel::spherical(fam, k), n, 10_000 + rep).unwrap();
        match tyler_shape(&data, &zero(k), 1e-9, 500) {
            Ok(r) => {
                let res = tyler_residual(&data, &zero(k), &r.shape).unwrap();
                worst_res = worst_res.max(res);
            }
            Err(_) => {
                failures += 1;
                continue 'outer;
            }
        }
        runs += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_eq = 0.0_f64;
    for t in 0..100u64 {
        let k = [2, 3, 4][(t % 3) as usize];
        let data = sample(&RadialModel::spherical(RadialFamily::Student(3.0), k), 100, 20_000 + t).unwrap();
        let a = random_invertible(k, &mut rng);
        let b = DVector::from_fn(k, |_, _| rng.random_range(-5.0..5.0));
        let moved = data.affine(&a, &b).unwrap();
        let base = tyler_shape(&data, &zero(k), 1e-13, 2000).unwrap().shape;
        let image = tyler_shape(&moved, &b, 1e-13, 2000).unwrap().shape;
        let expected = normalize_shape(&(&a * base.as_matrix() * a.transpose())).unwrap();
        worst_eq = worst_eq.max((image.as_matrix() - expected.as_matrix()).amax());
    }
    let pass = failures == 0 && worst_res <= 1e-9 && worst_eq <= 1e-8;
    report(
        3,
        pass,
        &format!("{runs} datasets, max residual {worst_res:.1e}, {failures} failures; equivariance error {worst_eq:.1e} over 100 maps"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_one_step_identity() {
    let families = [RadialFamily::Gaussian, RadialFamily::Student(3.0), RadialFamily::PowerExponential(3.0)];
    let scores = [ScoreFamily::VanDerWaerden, ScoreFamily::Student(3.0), ScoreFamily::Student(0.5)];
    let grid = BetaGrid::default();
    let mut worst = 0.0_f64;
    let mut min_h0 = f64::INFINITY;
    let mut exact_constant = true;
    for rep in 0..100u64 {
        let k = [2, 3][(rep % 2) as usize];
        let fam = families[(rep % 3) as usize];
        let f1 = scores[((rep / 3) % 3) as usize];
        let data = sample(&RadialModel::spherical(fam, k), 120, 30_000 + rep).unwrap();
        let theta = zero(k);
        let vt = tyler_shape(&data, &theta, 1e-9, 500).unwrap().shape;
        let res = r_estimate_from(&data, &theta, &vt, f1, &grid).unwrap();

        let w = RankScatter::new(&data, &theta, f1).unwrap().w(vt.as_matrix()).unwrap();
        let c = (k * (k + 2)) as f64 / res.alpha_star;
        let convex = vt.as_matrix() * (1.0 - c * w[(0, 0)]) + (&w / w[(0, 0)]) * (c * w[(0, 0)]);
        worst = worst.max((res.shape.as_matrix() - convex).amax());

        let path = OneStepPath::new(&data, &theta, &vt, f1).unwrap();
        min_h0 = min_h0.min(path.h_tilde(0.0).unwrap());

        let cfg = OneStepConfig {
            scores: ScoreFamily::Constant,
            location: Location::Known(vec![0.0; k]),
            ..OneStepConfig::default()
        };
        let constant = r_estimate(&data, &cfg).unwrap();
        exact_constant &= constant.shape == vt && constant.beta_star == 0.0;
    }
    let pass = worst <= 1e-12 && exact_constant && min_h0 >= 0.0;
    report(
        4,
        pass,
        &format!("identity error {worst:.1e} over 100 runs, constant scores exact: {exact_constant}, min h(0) {min_h0:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_cross_information_consistency() {
    let grid = BetaGrid::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for f1 in [ScoreFamily::VanDerWaerden, ScoreFamily::Student(3.0)] {
        for g1 in [RadialFamily::Gaussian, RadialFamily::Student(3.0)] {
            let target = cross_info(f1, g1, 2, &quad()).unwrap();
            let model = RadialModel::spherical(g1, 2);
            let alphas: Vec<f64> = (0..200u64)
                .map(|s| {
                    let data = sample(&model, 5000, 40_000 + s).unwrap();
                    let vt = tyler_shape(&data, &zero(2), 1e-9, 500).unwrap().shape;
                    r_estimate_from(&data, &zero(2), &vt, f1, &grid).unwrap().alpha_star
                })
                .collect();
            let med = median(alphas);
            let rel = (med - target).abs() / target;
            pass &= rel <= 0.10;
            lines.push(format!("{f1}/{g1}: median 1/β* {med:.3} vs J {target:.3} ({:+.1}%)", 100.0 * (med - target) / target));
        }
    }
    report(5, pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_6_simulation_cells() {
    let mut cfg = SimConfig::table2();
    cfg.n = vec![250];
    cfg.location = SimLocation::Known;
    cfg.models = vec![ModelSpec::spherical(RadialFamily::Gaussian), ModelSpec::spherical(RadialFamily::PowerExponential(5.0))];
    cfg.estimators = vec![
        EstimatorSpec::tyler(),
        EstimatorSpec::gaussian(),
        EstimatorSpec::onestep(ScoreFamily::VanDerWaerden, Preliminary::Tyler),
    ];
    let report_data = run_sim(&cfg).unwrap();

    // (estimator, scores, preliminary, family, printed MSE of V12 and V22)
    let cells = [
        ("tyler", "-", "-", "normal", [0.0075, 0.0369]),
        ("gaussian", "-", "-", "normal", [0.0038, 0.0175]),
        ("ronestep", "vdw", "tyler", "normal", [0.0039, 0.0176]),
        ("ronestep", "vdw", "tyler", "e", [0.0019, 0.0073]),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (est, scores, pre, fam, printed) in cells {
        let row = report_data.find(est, scores, pre, fam, 250).unwrap_or_else(|| panic!("missing row {est}/{scores}/{pre}/{fam}"));
        assert_eq!(row.replications, 1000);
        for (idx, (r, c)) in [(1, 2), (2, 2)].into_iter().enumerate() {
            let comp = row.component(r, c).unwrap();
            let ok = (comp.mse - printed[idx]).abs() <= 3.0 * comp.mse_se;
            pass &= ok && row.failures == 0;
            lines.push(format!(
                "{est}/{scores}/{fam} V{r}{c}: {:.4} ± {:.4} vs {}{}",
                comp.mse,
                3.0 * comp.mse_se,
                printed[idx],
                if ok { "" } else { " (outside)" }
            ));
        }
    }
    report(6, pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_7_sphericity_size() {
    let tester = SphericityTester::new(ScoreFamily::VanDerWaerden, 2, &quad()).unwrap();
    let model = RadialModel::spherical(RadialFamily::Gaussian, 2);
    let v0 = ShapeMatrix::identity(2);
    let reps = 2000;
    let rejections = (0..reps as u64)
        .filter(|&s| {
            let data = sample(&model, 200, 50_000 + s).unwrap();
            tester.test(&data, &zero(2), &v0).unwrap().p_value < 0.05
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    let pass = (0.035..=0.065).contains(&rate);
    report(7, pass, &format!("empirical size {rate:.4} over {reps} replications"));
    assert!(pass);
}

#[test]
fn criterion_8_distribution_freeness() {
    let tester = SphericityTester::new(ScoreFamily::VanDerWaerden, 2, &quad()).unwrap();
    let v0 = ShapeMatrix::identity(2);
    let stats = |fam: RadialFamily, base: u64| -> Vec<f64> {
        let model = RadialModel::spherical(fam, 2);
        (0..2000u64)
            .map(|s| tester.test(&sample(&model, 200, base + s).unwrap(), &zero(2), &v0).unwrap().q)
            .collect()
    };
    let a = stats(RadialFamily::Gaussian, 60_000);
    let b = stats(RadialFamily::Student(3.0), 70_000);
    let ks = ks_two_sample(&a, &b).unwrap();
    let pass = ks.p_value > 0.001;
    report(8, pass, &format!("KS statistic {:.4}, p = {:.3}", ks.statistic, ks.p_value));
    assert!(pass);
}
