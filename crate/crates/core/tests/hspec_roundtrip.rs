use proptest::prelude::*;
use qhier_core::hspec::{assemble_full, parse_spec, render, KLocalHamiltonian, LocalTerm};
use qhier_core::random::{random_hermitian, seeded};

fn random_model(seed: u64, n: usize, d: usize, m: usize) -> KLocalHamiltonian {
    let mut rng = seeded(seed);
    let terms = (0..m)
        .map(|l| {
            let k = 1 + l % n.min(2);
            let sites: Vec<usize> = (0..k).map(|j| (l + j) % n).collect();
            LocalTerm::new(sites, random_hermitian(d.pow(k as u32), &mut rng), format!("t{l}"))
        })
        .collect();
    KLocalHamiltonian::new(n, d, terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn render_then_parse_is_exact(seed in any::<u64>(), n in 1usize..5, d in 2usize..4, m in 1usize..6) {
        let h = random_model(seed, n, d, m);
        let back = parse_spec(&render(&h)).unwrap();
        prop_assert_eq!(back.n, h.n);
        prop_assert_eq!(back.d, h.d);
        prop_assert_eq!(back.terms.len(), h.terms.len());
        for (a, b) in back.terms.iter().zip(&h.terms) {
            prop_assert_eq!(&a.sites, &b.sites);
            prop_assert_eq!(a.matrix.max_abs_diff(&b.matrix), 0.0);
        }
        prop_assert_eq!(assemble_full(&back).unwrap().max_abs_diff(&assemble_full(&h).unwrap()), 0.0);
    }
}

#[test]
fn pauli_text_matches_hand_built_matrix() {
    let h = parse_spec("# two-site Ising\nsites 2 2\nterm [0,1] ZZ -1\nterm [0] X 0.25\nterm [1] X 0.25\n").unwrap();
    let full = assemble_full(&h).unwrap();
    // Diagonal of -ZZ on |00>,|01>,|10>,|11>.
    for (i, z) in [-1.0, 1.0, 1.0, -1.0].iter().enumerate() {
        assert_eq!(full.get(i, i).re, *z);
    }
    // X on site 0 (slowest) couples |00> and |10>.
    assert_eq!(full.get(0, 2).re, 0.25);
    assert_eq!(full.get(0, 1).re, 0.25);
    assert_eq!(full.get(0, 3).re, 0.0);
}

#[test]
fn diagnostics_carry_positions() {
    let err = parse_spec("sites 2 2\nterm [0,1] XQ\n").unwrap_err();
    let text = err.to_string();
    assert!(text.contains("line 2"), "{text}");
}
