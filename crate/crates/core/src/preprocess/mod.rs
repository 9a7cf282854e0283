//! Repair of machine-translated SQuAD tuples and conversion of MMQA instances.

mod mmqa;
mod regroup;
mod sanitize;

pub use mmqa::{mmqa_bucket, mmqa_to_squad, parse_mmqa, setting_of, MmqaInstance, MmqaLang};
pub use regroup::{parse_tuples, regroup_tuples, RawTuple, RegroupEvent, RegroupReport};
pub use sanitize::{
    relocate_answer, sanitize_text, RuleSet, SanitizationRule, Relocation, DEFAULT_ABBREVIATIONS,
};
