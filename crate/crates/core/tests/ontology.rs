mod oracles;

use std::collections::BTreeSet;

use congen::ontology::{violation_probability, Axiom, Gazetteer, Ontology};
use oracles::{enumerate_violation, facts, fixpoint, random_ontology, violation_case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn closure_matches_fixpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..500 {
        let o = random_ontology(&mut rng);
        let closure = o.closure();
        assert_eq!(facts(&closure), fixpoint(&facts(&o)), "case {case}: {o:?}");
        assert_eq!(closure.closure(), closure, "idempotent, case {case}");
    }
}

#[test]
fn minimal_axioms_keep_the_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for _ in 0..500 {
        let o = random_ontology(&mut rng);
        if !o.is_consistent().0 {
            continue;
        }
        let m = o.minimal_axioms().unwrap();
        assert_eq!(m.closure(), o.closure(), "{o:?}");
        assert!(m.axioms().len() <= o.axioms().len());
        assert_eq!(m.minimal_axioms().unwrap(), m, "reduction is idempotent");
        checked += 1;
    }
    assert!(checked > 300, "only {checked} consistent ontologies");
}

#[test]
fn minimal_axioms_drop_redundant_edges() {
    let o = Ontology::from_axioms([Axiom::sub("A", "B"), Axiom::sub("B", "C"), Axiom::sub("A", "C")]).unwrap();
    let expected: BTreeSet<Axiom> = [Axiom::sub("A", "B"), Axiom::sub("B", "C")].into();
    assert_eq!(o.minimal_axioms().unwrap().axioms(), &expected);
    let o = Ontology::from_axioms([Axiom::member("a", "B"), Axiom::member("a", "A"), Axiom::sub("A", "B")]).unwrap();
    assert!(!o.minimal_axioms().unwrap().contains(&Axiom::member("a", "B")));
}

#[test]
fn violation_probability_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut nonzero = 0;
    for case in 0..500 {
        let v = violation_case(&mut rng);
        let o = &v.ontology;
        let got = violation_probability(&congen::constraints::words(&v.sentence), o, &v.gazetteer).unwrap();
        let want = enumerate_violation(&fixpoint(&facts(o)), o.individuals(), o.concepts(), &v.slots, &v.assertions);
        assert!(
            (got.probability - want).abs() <= 1e-12,
            "case {case}: {:?} got {} want {want}",
            v.sentence,
            got.probability
        );
        nonzero += usize::from(want > 0.0);
    }
    assert!(nonzero > 50, "only {nonzero} cases with a possible violation");
}

#[test]
fn independent_violations_combine() {
    let o = Ontology::from_axioms([
        Axiom::disjoint("Democrat", "Republican"),
        Axiom::member("bernie", "Democrat"),
        Axiom::member("mitt", "Republican"),
    ])
    .unwrap();
    let mut g = Gazetteer::new();
    g.insert("bernie", vec![("bernie".into(), 0.5)]).unwrap();
    g.insert("mitt", vec![("mitt".into(), 0.5)]).unwrap();
    let ws = congen::constraints::words("bernie is a republican and mitt is a democrat");
    let r = violation_probability(&ws, &o, &g).unwrap();
    assert!((r.probability - 0.75).abs() < 1e-12);
    assert_eq!(r.violations.len(), 2);
}
