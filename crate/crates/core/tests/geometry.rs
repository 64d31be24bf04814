mod oracles;

use std::time::Instant;

use congen::geometry::{
    axiom_loss, gradients, init, total_loss, toy_ontology, train, verify, Ball, BallEmbedding, TrainConfig,
};
use congen::ontology::{Axiom, Ontology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randomize(e: &mut BallEmbedding, rng: &mut ChaCha8Rng) {
    for b in e.concepts.values_mut() {
        for x in &mut b.center {
            *x = rng.random_range(-2.0..2.0);
        }
        b.radius = rng.random_range(0.2..3.0);
    }
    for p in e.individuals.values_mut() {
        for x in p.iter_mut() {
            *x = rng.random_range(-2.0..2.0);
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let h = 1e-5;
    let mut done = 0;
    while done < 100 {
        let o = oracles::random_ontology(&mut rng);
        if o.closure().axioms().is_empty() {
            continue;
        }
        let dim = rng.random_range(2..=3);
        let mut e = init(&o, dim, rng.random());
        randomize(&mut e, &mut rng);
        let (margin, r_max) = (rng.random_range(0.0..0.3), 2.5);
        let grad = gradients(&e, &o, margin, r_max).unwrap();
        let base = e.params();
        assert_eq!(grad.len(), base.len());
        for i in 0..base.len() {
            let mut plus = e.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_params(&p);
            let mut minus = e.clone();
            p[i] -= 2.0 * h;
            minus.set_params(&p);
            let fd = (total_loss(&plus, &o, margin, r_max).unwrap() - total_loss(&minus, &o, margin, r_max).unwrap())
                / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
        done += 1;
    }
}

#[test]
fn hinge_examples() {
    let mut e = BallEmbedding::new(2);
    e.concepts.insert("A".into(), Ball { center: vec![0.0, 0.0], radius: 1.0 });
    e.concepts.insert("B".into(), Ball { center: vec![3.0, 0.0], radius: 1.0 });
    assert!((axiom_loss(&e, &Axiom::sub("A", "B"), 0.1).unwrap() - 3.1).abs() < 1e-12);
    assert_eq!(axiom_loss(&e, &Axiom::disjoint("A", "B"), 0.1).unwrap(), 0.0);
    let o = Ontology::from_axioms([Axiom::sub("A", "B")]).unwrap();
    let g = gradients(&e, &o, 0.1, 10.0).unwrap();
    // layout: A center, A radius, B center, B radius
    assert_eq!((g[2], g[5]), (1.0, -1.0));
}

#[test]
fn toy_training_verifies_quickly() {
    let start = Instant::now();
    let r = train(&toy_ontology(), &TrainConfig::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(verify(&r.embedding, &toy_ontology()).fraction, 1.0);
    assert!(elapsed < 10.0, "{elapsed} s");
}

/// A random tree of Sub edges with disjoint siblings and leaf members.
fn tree_ontology(rng: &mut ChaCha8Rng) -> Ontology {
    let n = rng.random_range(2..=10);
    let mut axioms = Vec::new();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let parent = rng.random_range(0..i);
        children[parent].push(i);
        axioms.push(Axiom::sub(&format!("T{i}"), &format!("T{parent}")));
    }
    for kids in &children {
        if kids.len() >= 2 && axioms.len() < 15 && rng.random_bool(0.6) {
            axioms.push(Axiom::disjoint(&format!("T{}", kids[0]), &format!("T{}", kids[1])));
        }
    }
    for (i, kids) in children.iter().enumerate() {
        if kids.is_empty() && axioms.len() < 15 && rng.random_bool(0.4) {
            axioms.push(Axiom::member(&format!("x{i}"), &format!("T{i}")));
        }
    }
    Ontology::from_axioms(axioms).unwrap()
}

#[test]
fn trees_train_to_full_verification() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..20 {
        let o = tree_ontology(&mut rng);
        let cfg = TrainConfig { seed: case, ..TrainConfig::default() };
        let r = train(&o, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]), "case {case}");
        let v = verify(&r.embedding, &o);
        assert_eq!(v.fraction, 1.0, "case {case}: {:?}", v.failing);
    }
}

#[test]
fn same_seed_same_parameters() {
    let cfg = TrainConfig { epochs: 200, seed: 9, ..TrainConfig::default() };
    let a = train(&toy_ontology(), &cfg).unwrap();
    let b = train(&toy_ontology(), &cfg).unwrap();
    assert_eq!(a.embedding.params(), b.embedding.params());
    assert_eq!(a.trace, b.trace);
}

#[test]
fn empty_ontology_takes_no_steps() {
    let o = Ontology::from_axioms(Vec::<Axiom>::new()).unwrap();
    let r = train(&o, &TrainConfig::default()).unwrap();
    assert_eq!(r.steps, 0);
    assert_eq!(r.trace, vec![0.0]);
}
