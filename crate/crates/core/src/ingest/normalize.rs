/// Dosage-form suffixes dropped from entity names, longest first.
const FORM_SUFFIXES: &[&str] = &[
    "film-coated tablets",
    "extended-release tablets",
    "oral suspension",
    "oral solution",
    "for injection",
    "injection",
    "ointment",
    "capsules",
    "capsule",
    "tablets",
    "tablet",
    "syrup",
    "cream",
];

/// Identity normalization shared by every store modality: case-fold, trim,
/// collapse internal whitespace, strip a trailing dosage-form suffix.
pub fn normalize_entity(name: &str) -> String {
    let mut s = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let before = s.len();
        for suffix in FORM_SUFFIXES {
            if let Some(stem) = s.strip_suffix(suffix) {
                if stem.ends_with(' ') && !stem.trim().is_empty() {
                    s = stem.trim_end().to_string();
                    break;
                }
            }
        }
        if s.len() == before {
            return s;
        }
    }
}
