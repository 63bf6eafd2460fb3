mod common;

use regrag_core::context::{assemble_from_run, DEFAULT_BUDGET};
use regrag_core::eval::{
    classify_grounding, EvalError, GroundingClass, GroundingLabel, GroundingSummary, Variant, DEFAULT_OVERLAP_THRESHOLD,
};
use regrag_core::generation::REFUSAL;

const TRUTH: &str = "amc-sora-03";

fn label(answer: &str) -> Result<GroundingLabel, EvalError> {
    let r = common::retriever();
    let run = r.retrieve("Ground risk buffer").unwrap();
    let bundle = assemble_from_run(&run, r.corpus(), DEFAULT_BUDGET);
    assert_eq!(bundle.included_ids[0], TRUTH);
    classify_grounding(answer, &bundle, r.corpus(), TRUTH, DEFAULT_OVERLAP_THRESHOLD)
}

fn marker() -> usize {
    common::corpus().position(TRUTH).unwrap()
}

// Hand-labelled answers over the evidence for "Ground risk buffer".
#[test]
fn five_answer_fixture() {
    let m = marker();
    let cases = [
        (
            format!("A ground risk buffer surrounds the operational volume and should be at least equal to the planned flight height [{m}]."),
            GroundingClass::Grounded,
            true,
        ),
        (
            format!("The buffer protects third parties on the ground [{m}]. Night flights always need a 500 m corridor."),
            GroundingClass::Unsupported,
            true,
        ),
        (
            format!("The buffer follows the one to one rule with the flight height [{m}]. The buffer for tethered aircraft is not specified in the available material."),
            GroundingClass::Incomplete,
            true,
        ),
        (REFUSAL.to_string(), GroundingClass::Incomplete, false),
        (
            "A ground risk buffer surrounds the operational volume [99].".to_string(),
            GroundingClass::Unsupported,
            false,
        ),
    ];
    for (answer, class, used) in cases {
        let l = label(&answer).unwrap();
        assert_eq!(l.class, class, "{answer}");
        assert_eq!(l.chunk_used, used, "{answer}");
        assert_eq!(l.class == GroundingClass::Grounded, l.sentences.iter().all(|s| s.supported));
    }
}

#[test]
fn degenerate_and_invalid_answers() {
    assert_eq!(label("").unwrap().class, GroundingClass::Incomplete);
    assert!(matches!(label("See [5b]."), Err(EvalError::UnparsableCitation(m)) if m == "[5b]"));
}

#[test]
fn summary_percentages() {
    let m = marker();
    let grounded = label(&format!("The buffer protects third parties on the ground [{m}].")).unwrap();
    let unsupported = label("Drones are fast.").unwrap();
    let summary = GroundingSummary::by_variant(&[
        (Variant::Direct, grounded.clone()),
        (Variant::Direct, unsupported),
        (Variant::Synonym, grounded),
    ]);
    assert_eq!(summary[0].variant, Variant::Direct);
    assert_eq!(summary[0].grounded, 50.0);
    assert_eq!(summary[0].unsupported, 50.0);
    assert_eq!(summary[0].chunk_used, 50.0);
    assert_eq!(summary[1].grounded, 100.0);
}
