use baymeta_cli::config::{Mode, ParticipationSpec, RunConfig};
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![
        Just(Mode::Centralized),
        Just(Mode::CentralizedContrastive),
        Just(Mode::Federated),
        Just(Mode::FederatedContrastive),
        Just(Mode::Protomaml),
        Just(Mode::CoresetNn),
        Just(Mode::Checks),
    ]
}

fn participation() -> impl Strategy<Value = ParticipationSpec> {
    prop_oneof![
        (1usize..50).prop_map(ParticipationSpec::Count),
        (0.01..1.0f64).prop_map(ParticipationSpec::Fraction),
        Just(ParticipationSpec::Keyword("all".into())),
    ]
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(
        mode in mode(),
        seed: u64,
        alpha in 1e-6..1.0f64,
        lambda in 0.0..2.0f64,
        k in 1usize..30,
        hidden in prop::collection::vec(1usize..64, 0..3),
        participation in participation(),
        clients in prop::option::of(1usize..20),
        pooled: bool,
    ) {
        let mut cfg = RunConfig::default();
        cfg.mode = mode;
        cfg.seed = seed;
        cfg.hp.alpha = alpha;
        cfg.hp.lambda = lambda;
        cfg.tasks.counts.k = k;
        cfg.net.hidden_dims = hidden;
        cfg.fed.participation = participation;
        cfg.fed.clients = clients;
        cfg.eval.pooled = pooled;

        let text = cfg.to_toml();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.content_hash(), cfg.content_hash());
    }
}

#[test]
fn empty_file_gives_the_defaults() {
    assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
}
