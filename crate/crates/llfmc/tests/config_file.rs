use llfmc::config_file::{echo, parse_into};
use llfmc::Error;
use llfmc_core::{PenaltyKind, RunConfig};
use proptest::prelude::*;

#[test]
fn parses_keys_comments_and_shorthands() {
    let text = "\
# solver
rank = 6
eta = 2.5e4   # admm
penalty_x.kind = scad
penalty_x.a = 4.0
gamma_x = 0.5
gamma_y = 8
penalty_y.t = 20
seed = 11
";
    let c = parse_into(RunConfig::default(), text).unwrap();
    assert_eq!(c.rank, 6);
    assert_eq!(c.eta, 2.5e4);
    assert_eq!(c.penalty_x.kind, PenaltyKind::Scad);
    assert_eq!(c.penalty_x.a, 4.0);
    assert_eq!(c.gamma_x(), 0.5);
    assert_eq!(c.gamma_y(), 8.0);
    assert_eq!(c.penalty_y.t, 20.0);
    assert_eq!(c.seed, 11);
}

#[test]
fn errors_name_the_line() {
    let err = parse_into(RunConfig::default(), "rank = 3\nbogus = 1\n").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.starts_with("line 2") && m.contains("bogus")));
    assert_eq!(err.exit_code(), 2);
    let err = parse_into(RunConfig::default(), "rank 3\n").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.starts_with("line 1")));
    let err = parse_into(RunConfig::default(), "alpha = lots\n").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("alpha")));
}

#[test]
fn unknown_penalty_is_a_configuration_error() {
    let err = parse_into(RunConfig::default(), "penalty_y.kind = huber\n").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn kinds() -> impl Strategy<Value = PenaltyKind> {
    prop::sample::select(PenaltyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn echo_round_trips(
        rank in 1usize..20,
        alpha in 0.0f64..1e3,
        eta in 1e-3f64..1e8,
        kx in kinds(),
        ky in kinds(),
        gx in 0.0f64..1e4,
        gy in 0.0f64..1e4,
        t in 0.01f64..50.0,
        b in 0.01f64..50.0,
        a in 2.01f64..10.0,
        max_iter in 1usize..10_000,
        tol in 1e-9f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut c = RunConfig { rank, alpha, eta, max_iter, tol1: tol, tol2: tol / 3.0, seed, ..RunConfig::default() };
        c.penalty_x.kind = kx;
        c.penalty_y.kind = ky;
        c.set_gamma_x(gx);
        c.set_gamma_y(gy);
        // shape parameters only matter for their own kind, so echo writes only those
        for p in [&mut c.penalty_x, &mut c.penalty_y] {
            match p.kind {
                PenaltyKind::Mcp => p.t = t,
                PenaltyKind::MType => p.b = b,
                PenaltyKind::Scad => p.a = a,
                _ => {}
            }
        }
        let back = parse_into(RunConfig::default(), &echo(&c)).unwrap();
        prop_assert_eq!(back, c);
    }
}
