use proptest::prelude::*;

use assist_core::harness::{
    build_matrix, bundled_matrix, parse_report, DefectAnnotation, DefectCategory, DefectTable, Entry, ModelSet,
    ParsedEntry, SamplingSet, SweepKind, TaskFixture, Variant,
};
use assist_core::orchestrator::{SamplingConfig, SamplingPreset};

fn entry() -> impl Strategy<Value = Entry> {
    (
        prop::option::of(prop_oneof![Just(Variant::A), Just(Variant::B)]),
        1u32..500,
    )
        .prop_map(|(variant, count)| Entry { variant, count })
}

proptest! {
    #[test]
    fn entry_text_round_trips(e in entry()) {
        prop_assert_eq!(Entry::parse(&e.render()), Some(e));
    }

    #[test]
    fn entry_parse_accepts_only_canonical_text(text in "[abx0-9 ]{0,6}") {
        if let Some(e) = Entry::parse(&text) {
            prop_assert_eq!(e.render(), text.trim());
        }
    }

    #[test]
    fn matrix_has_one_plan_per_row_and_task(
        temps in prop::collection::btree_set(1u32..=20, 1..12),
        models in prop::collection::btree_set("[a-z]{1,6}(-[0-9]{1,2}b)?", 1..8),
        both in any::<bool>(),
    ) {
        let sampling = SamplingSet {
            sweep_model: "sweep-model".into(),
            configurations: temps
                .iter()
                .map(|&t| SamplingPreset {
                    label: format!("temperature {t}"),
                    group: "g".into(),
                    sampling: SamplingConfig::new(f64::from(t) / 10.0, 1.0, 0.0).unwrap(),
                })
                .collect(),
        };
        let mut model_set = ModelSet::bundled();
        model_set.models = models.iter().cloned().collect();
        let tasks = if both { TaskFixture::both() } else { vec![TaskFixture::task1()] };
        let plans = build_matrix(&sampling, &model_set, &tasks).unwrap();
        prop_assert_eq!(plans.len(), (temps.len() + models.len()) * tasks.len());
        let ids: std::collections::HashSet<_> = plans.iter().map(|p| &p.run_id).collect();
        prop_assert_eq!(ids.len(), plans.len());
        prop_assert_eq!(plans.iter().filter(|p| p.sweep == SweepKind::Sampling).count(), temps.len() * tasks.len());
    }

    #[test]
    fn rendered_reports_parse_back_to_their_annotations(
        picks in prop::collection::vec((0usize..42, 0usize..12, any::<bool>(), 1u32..5), 0..40),
    ) {
        let plans = bundled_matrix();
        let annotations: Vec<DefectAnnotation> = picks
            .iter()
            .map(|&(plan, category, b, count)| {
                let category = DefectCategory::ALL[category];
                let variant = category.has_variants().then_some(if b { Variant::B } else { Variant::A });
                DefectAnnotation {
                    run_id: plans[plan].run_id.clone(),
                    task_id: plans[plan].task.task_id,
                    category,
                    variant,
                    count,
                    note: String::new(),
                }
            })
            .collect();
        for sweep in [SweepKind::Sampling, SweepKind::Model] {
            let text = DefectTable::build(sweep, &plans, &annotations).render_text();
            let mut parsed = parse_report(&text, &plans).unwrap();
            let mut expected: Vec<ParsedEntry> = annotations
                .iter()
                .filter(|a| plans.iter().any(|p| p.run_id == a.run_id && p.sweep == sweep))
                .map(ParsedEntry::from)
                .collect();
            parsed.sort();
            expected.sort();
            prop_assert_eq!(parsed, expected);
        }
    }
}
