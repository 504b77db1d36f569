//! The rendered sociology prompt for task X must reproduce the reference
//! text byte for byte.

use collider_core::prompt::{prompt_matrix, render_prompt, CounterbalanceCode, DomainVocabulary};
use collider_core::tasks::{self, TaskId};
use std::path::Path;

fn fixture(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn vocab(name: &str) -> DomainVocabulary {
    DomainVocabulary::from_json_file(&fixture(&format!("vocab/{name}.json"))).unwrap()
}

#[test]
fn sociology_task_x_matches_reference_bytes() {
    let bundle = render_prompt(
        &vocab("sociology"),
        &CounterbalanceCode::canonical(),
        tasks::by_id(TaskId::X),
    )
    .unwrap();
    let expected = std::fs::read(fixture("golden/sociology_task_x_prompt.txt")).unwrap();
    assert_eq!(
        bundle.full_text.as_bytes(),
        expected.as_slice(),
        "rendered prompt diverged from the reference text"
    );
}

#[test]
fn all_three_vocabularies_render_the_full_matrix() {
    let vocabs = [vocab("economy"), vocab("sociology"), vocab("weather")];
    let bundles = prompt_matrix(&vocabs, tasks::catalog()).unwrap();
    assert_eq!(bundles.len(), 132);
    // Stable across renders.
    let again = prompt_matrix(&vocabs, tasks::catalog()).unwrap();
    assert_eq!(bundles, again);
    // Every bundle carries its domain introduction and the instruction tail.
    for bundle in &bundles {
        assert!(bundle
            .full_text
            .ends_with("Please provide only a numeric response and no additional information."));
    }
}

#[test]
fn counterbalance_two_flips_the_first_cause_in_the_sociology_prompt() {
    let bundle = render_prompt(
        &vocab("sociology"),
        &CounterbalanceCode::from_code(2).unwrap(),
        tasks::by_id(TaskId::X),
    )
    .unwrap();
    assert!(bundle
        .sections
        .causal_mechanism
        .contains("Normal urbanization causes high socio-economic mobility."));
    assert!(bundle.sections.question.contains("normal urbanization"));
}
