//! Adversarial training on the toy task: the robustified network should
//! resist the attack at least as well as a standard one, and in the regime
//! where a robust classifier exists at all, it should not give up clean
//! accuracy.

use topodetect::attack::{adversarial_train, pgd, PgdConfig};
use topodetect::nn::{train, Network, OptimizerKind, TrainConfig};
use topodetect::pipeline::data::{gen_toy, split_dataset, subset, Dataset, ToySpec};
use topodetect::pipeline::ArchSpec;

struct Setup {
    train: Dataset,
    test: Dataset,
    input_shape: Vec<usize>,
    defs: Vec<topodetect::nn::LayerDef>,
    class_count: usize,
}

fn setup() -> Setup {
    let ds = gen_toy(&ToySpec::default(), 99).unwrap();
    let split = split_dataset(ds.len(), 7);
    let (input_shape, defs, class_count) = ArchSpec::Toy.resolve();
    Setup {
        train: subset(&ds, &split.train),
        test: subset(&ds, &split.test),
        input_shape,
        defs,
        class_count,
    }
}

fn train_pair(setup: &Setup, epsilon: f64) -> (Network, Network) {
    let tc = TrainConfig {
        optimizer: OptimizerKind::Adam,
        lr: 0.01,
        epochs: 30,
        batch_size: 32,
        seed: 5,
    };
    let mut standard =
        Network::init(setup.input_shape.clone(), &setup.defs, setup.class_count, 21).unwrap();
    train(&mut standard, &setup.train.inputs, &setup.train.labels, &tc).unwrap();
    let mut robust =
        Network::init(setup.input_shape.clone(), &setup.defs, setup.class_count, 21).unwrap();
    adversarial_train(
        &mut robust,
        &setup.train.inputs,
        &setup.train.labels,
        &PgdConfig::new(epsilon),
        &tc,
    )
    .unwrap();
    (standard, robust)
}

fn adversarial_accuracy(net: &Network, test: &Dataset, epsilon: f64) -> f64 {
    let config = PgdConfig::new(epsilon);
    let mut hits = 0;
    for (x, &y) in test.inputs.iter().zip(&test.labels) {
        let adv = pgd(net, x, y, &config).unwrap();
        if net.predict(&adv).unwrap() == y {
            hits += 1;
        }
    }
    hits as f64 / test.len() as f64
}

#[test]
fn robust_training_resists_the_attack_at_least_as_well() {
    let s = setup();
    let (standard, robust) = train_pair(&s, 0.1);
    let std_adv = adversarial_accuracy(&standard, &s.test, 0.1);
    let at_adv = adversarial_accuracy(&robust, &s.test, 0.1);
    assert!(
        at_adv >= std_adv,
        "adversarially trained {} vs standard {}",
        at_adv,
        std_adv
    );
}

#[test]
fn robust_training_keeps_clean_accuracy_when_feasible() {
    // At a budget below half the class gap the perturbed class supports stay
    // disjoint, so robust learning is possible and clean accuracy must hold.
    let s = setup();
    let (standard, robust) = train_pair(&s, 0.05);
    let std_clean = standard.accuracy(&s.test.inputs, &s.test.labels).unwrap();
    let at_clean = robust.accuracy(&s.test.inputs, &s.test.labels).unwrap();
    assert!(
        (std_clean - at_clean).abs() <= 0.10,
        "clean accuracy gap: standard {} vs adversarially trained {}",
        std_clean,
        at_clean
    );
    // The robustified model should also still beat the attack here.
    let std_adv = adversarial_accuracy(&standard, &s.test, 0.05);
    let at_adv = adversarial_accuracy(&robust, &s.test, 0.05);
    assert!(at_adv >= std_adv - 0.02, "{} vs {}", at_adv, std_adv);
}
