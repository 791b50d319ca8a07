use partadvise::rl::{train, BanditEnvironment, Hyperparams, PolicyModel, TrainConfig};

fn bandit() -> BanditEnvironment {
    BanditEnvironment {
        state: (0..29).map(|i| (i as f64 * 0.37).fract()).collect(),
        rewards: vec![1.0, 1.0, 2.0, 1.0],
    }
}

fn trained(agents: usize) -> PolicyModel {
    let env = bandit();
    let mut m = PolicyModel::new(29, 4, Hyperparams::default(), 11);
    let cfg = TrainConfig {
        epochs: 150,
        agents,
        seed: 11,
        ..TrainConfig::default()
    };
    let reports = train(&mut m, &env, &cfg).unwrap();
    assert_eq!(reports.len(), 150);
    assert!(reports.last().unwrap().mean_reward > reports[0].mean_reward);
    m
}

#[test]
fn agent_count_does_not_change_the_answer() {
    let env = bandit();
    let (one, four) = (trained(1), trained(4));
    assert_eq!(one.argmax(&env.state).unwrap().0, 2);
    assert_eq!(four.argmax(&env.state).unwrap().0, 2);
    assert_eq!(trained(4), four);
}

#[test]
fn checkpoint_survives_a_file_round_trip() {
    let m = trained(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    m.save(&path).unwrap();
    let back = PolicyModel::load(&path).unwrap();
    let s = bandit().state;
    assert_eq!(back.probabilities(&s).unwrap(), m.probabilities(&s).unwrap());
    assert_eq!(back.value(&s).unwrap(), m.value(&s).unwrap());
}
