use clusterscribe_core::describe::prompt::{render_prompt, PromptTemplates};
use clusterscribe_core::PromptVariant;

const BLOCK: &str = "- a crane near the truck\n- a yellow excavator";

fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn standard_prompt_matches_golden() {
    let req = render_prompt(
        &PromptTemplates::bundled(),
        PromptVariant::Standard,
        7,
        BLOCK,
    )
    .unwrap();
    assert_eq!(req.system, golden("standard_system.txt"));
    assert_eq!(req.user, golden("standard_user.txt"));
    assert!(req.system.contains("2-4 sentences maximum"));
}

#[test]
fn cot_prompt_matches_golden() {
    let req = render_prompt(&PromptTemplates::bundled(), PromptVariant::Cot, 7, BLOCK).unwrap();
    assert_eq!(req.system, golden("cot_system.txt"));
    assert_eq!(req.user, golden("cot_user.txt"));
    assert!(req.user.contains("ANALYSIS STEPS:"));
}

#[test]
fn caption_block_is_inserted_verbatim() {
    let block = "- {CLUSTER_ID} literal\n- $1 and \\n";
    let req = render_prompt(
        &PromptTemplates::bundled(),
        PromptVariant::Standard,
        3,
        block,
    )
    .unwrap();
    assert!(req.user.contains("Cluster 3."));
    assert_eq!(req.user.matches(block).count(), 1);
}
