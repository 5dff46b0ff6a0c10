//! Seeded synthetic monograph corpus in the closed template language, with
//! the gold records each document must yield.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{canonical_record, CorpusDoc, ExtractionRecord, FactMultiset, NodeSpec, RecordTarget, Specialist};
use crate::pest::{Attribute, HepaticStatus, PatientProfile};
use crate::schema::{names, HybridSchema};
use crate::store::{EntityId, Provenance};
use crate::value::{convert, NumRange, Value};

pub const DEFAULT_STRATA: [&str; 5] = ["oncology", "cardiology", "infectious_disease", "neurology", "endocrinology"];

const SYLLABLES: &[&str] = &[
    "ab", "be", "ca", "do", "el", "fa", "ga", "hi", "lo", "mu", "na", "or", "pe", "ra", "si", "ta", "ul", "ve",
    "xa", "zo", "ki", "lu", "me", "ny",
];

struct StratumVocab {
    suffixes: &'static [&'static str],
    indications: &'static [&'static str],
    classes: &'static [&'static str],
}

const VOCAB: [StratumVocab; 5] = [
    StratumVocab {
        suffixes: &["ciclib", "tinib", "rafenib"],
        indications: &[
            "HR-positive breast cancer",
            "metastatic breast cancer",
            "non-small cell lung cancer",
            "chronic myeloid leukemia",
            "renal cell carcinoma",
            "melanoma",
            "ovarian cancer",
            "multiple myeloma",
            "colorectal cancer",
            "mantle cell lymphoma",
        ],
        classes: &[
            "CDK4/6 inhibitors",
            "tyrosine kinase inhibitors",
            "BRAF inhibitors",
            "PARP inhibitors",
            "antimetabolites",
            "proteasome inhibitors",
            "aromatase inhibitors",
            "mTOR inhibitors",
        ],
    },
    StratumVocab {
        suffixes: &["pril", "sartan", "olol"],
        indications: &[
            "hypertension",
            "heart failure",
            "atrial fibrillation",
            "stable angina",
            "hyperlipidemia",
            "coronary artery disease",
            "peripheral artery disease",
            "venous thromboembolism",
            "left ventricular dysfunction",
            "pulmonary arterial hypertension",
        ],
        classes: &[
            "ACE inhibitors",
            "angiotensin receptor blockers",
            "beta blockers",
            "calcium channel blockers",
            "statins",
            "loop diuretics",
            "direct oral anticoagulants",
            "antiplatelet agents",
        ],
    },
    StratumVocab {
        suffixes: &["mycin", "floxacin", "conazole"],
        indications: &[
            "tuberculosis",
            "community-acquired pneumonia",
            "urinary tract infection",
            "invasive aspergillosis",
            "skin structure infection",
            "bacterial sinusitis",
            "esophageal candidiasis",
            "intra-abdominal infection",
            "pulmonary nontuberculous mycobacterial disease",
            "bacterial meningitis",
        ],
        classes: &[
            "rifamycins",
            "macrolides",
            "fluoroquinolones",
            "azole antifungals",
            "aminoglycosides",
            "tetracyclines",
            "glycopeptides",
            "oxazolidinones",
        ],
    },
    StratumVocab {
        suffixes: &["zepam", "triptan", "piprazole"],
        indications: &[
            "generalized anxiety disorder",
            "major depressive disorder",
            "migraine",
            "schizophrenia",
            "bipolar disorder",
            "partial-onset seizures",
            "insomnia",
            "Parkinson disease",
            "neuropathic pain",
            "restless legs syndrome",
        ],
        classes: &[
            "benzodiazepines",
            "SSRIs",
            "triptans",
            "atypical antipsychotics",
            "MAO inhibitors",
            "opioid analgesics",
            "anticonvulsants",
            "dopamine agonists",
        ],
    },
    StratumVocab {
        suffixes: &["gliptin", "gliflozin", "glutide"],
        indications: &[
            "type 2 diabetes mellitus",
            "obesity",
            "hypothyroidism",
            "osteoporosis",
            "gout",
            "acromegaly",
            "Cushing syndrome",
            "hyperparathyroidism",
            "growth hormone deficiency",
            "diabetic kidney disease",
        ],
        classes: &[
            "DPP-4 inhibitors",
            "SGLT2 inhibitors",
            "GLP-1 receptor agonists",
            "sulfonylureas",
            "thyroid hormones",
            "bisphosphonates",
            "xanthine oxidase inhibitors",
            "somatostatin analogs",
        ],
    },
];

/// Classes any drug may join, shared across strata.
const SHARED_CLASSES: &[&str] = &[
    "strong CYP3A4 inducers",
    "strong CYP3A4 inhibitors",
    "QT prolonging agents",
    "serotonergic agents",
    "CNS depressants",
    "P-gp substrates",
];

const CHEM_CLASSES: &[&str] = &[
    "aminopyrimidines",
    "quinazolines",
    "benzimidazoles",
    "triazoles",
    "piperazines",
    "sulfonamides",
    "biguanides",
    "peptide analogs",
];

const SALTS: &[&str] = &["mesylate", "hydrochloride", "sodium", "citrate", "maleate", "besylate"];

const EXCIPIENTS: &[&str] = &["lactose monohydrate", "magnesium stearate", "microcrystalline cellulose", "povidone"];

const MECHANISMS: &[&str] = &[
    "strong CYP3A4 induction decreases exposure",
    "CYP3A4 inhibition increases exposure",
    "additive QT prolongation",
    "increased bleeding risk",
    "risk of serotonin syndrome",
    "reduced renal clearance",
    "additive CNS depression",
    "P-gp inhibition increases plasma concentration",
];

/// Conditions that only ever appear as risks, never as indications.
pub const RISK_CONDITIONS: &[&str] = &[
    "lactic acidosis",
    "history of angioedema",
    "long QT syndrome",
    "active bleeding",
    "severe hypersensitivity",
    "myasthenia gravis",
    "acute pancreatitis",
    "galactose intolerance",
    "porphyria",
    "untreated hypokalemia",
];

/// One condition phrase of the template language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "clause", content = "value", rename_all = "snake_case")]
pub enum Clause {
    Adults,
    AgeAtLeast(f64),
    AgeUnder(f64),
    WeightBelow(f64),
    WeightAtLeast(f64),
    CrclBelow(f64),
    CrclBetween(f64, f64),
    Hepatic(HepaticStatus),
    Pregnancy,
    Condition(String),
}

impl Clause {
    pub fn attribute(&self) -> Attribute {
        match self {
            Clause::Adults | Clause::AgeAtLeast(_) | Clause::AgeUnder(_) => Attribute::Age,
            Clause::WeightBelow(_) | Clause::WeightAtLeast(_) => Attribute::Weight,
            Clause::CrclBelow(_) | Clause::CrclBetween(..) => Attribute::Crcl,
            Clause::Hepatic(_) => Attribute::HepaticStatus,
            Clause::Pregnancy => Attribute::Pregnancy,
            Clause::Condition(_) => Attribute::Conditions,
        }
    }

    pub fn text(&self) -> String {
        match self {
            Clause::Adults => "adults".into(),
            Clause::AgeAtLeast(n) => format!("aged {n} years or older"),
            Clause::AgeUnder(n) => format!("aged under {n} years"),
            Clause::WeightBelow(n) => format!("weight < {n} kg"),
            Clause::WeightAtLeast(n) => format!("weight at least {n} kg"),
            Clause::CrclBelow(n) => format!("CrCl < {n} mL/min"),
            Clause::CrclBetween(a, b) => format!("CrCl {a} to {b} mL/min"),
            Clause::Hepatic(h) => format!("{} hepatic impairment", h.name().to_lowercase()),
            Clause::Pregnancy => "pregnancy".into(),
            Clause::Condition(c) => format!("patients with {c}"),
        }
    }

    /// Truth value on a patient; `None` when the attribute is unknown.
    pub fn holds(&self, p: &PatientProfile) -> Option<bool> {
        match self {
            Clause::Adults => p.age.map(|a| a >= 18.0),
            Clause::AgeAtLeast(n) => p.age.map(|a| a >= *n),
            Clause::AgeUnder(n) => p.age.map(|a| a < *n),
            Clause::WeightBelow(n) => p.weight.map(|w| w < *n),
            Clause::WeightAtLeast(n) => p.weight.map(|w| w >= *n),
            Clause::CrclBelow(n) => p.crcl.map(|c| c < *n),
            Clause::CrclBetween(a, b) => p.crcl.map(|c| c >= *a && c <= *b),
            Clause::Hepatic(h) => p.hepatic_status.map(|s| s >= *h),
            Clause::Pregnancy => p.pregnancy,
            Clause::Condition(c) => Some(p.conditions.contains(&EntityId::new(c))),
        }
    }

    /// Makes the clause true on `p`.
    pub fn satisfy(&self, p: &mut PatientProfile) {
        match self {
            Clause::Adults => p.age = Some(40.0),
            Clause::AgeAtLeast(n) => p.age = Some(n + 5.0),
            Clause::AgeUnder(n) => p.age = Some(n / 2.0),
            Clause::WeightBelow(n) => p.weight = Some(n - 5.0),
            Clause::WeightAtLeast(n) => p.weight = Some(n + 10.0),
            Clause::CrclBelow(n) => p.crcl = Some(n / 2.0),
            Clause::CrclBetween(a, b) => p.crcl = Some((a + b) / 2.0),
            Clause::Hepatic(h) => p.hepatic_status = Some(*h),
            Clause::Pregnancy => p.pregnancy = Some(true),
            Clause::Condition(c) => {
                let id = EntityId::new(c);
                if !p.conditions.contains(&id) {
                    p.conditions.push(id);
                }
            }
        }
    }

    fn column(&self) -> (&'static str, Value) {
        match self {
            Clause::Adults => ("age_range", Value::Range(NumRange::at_least(18.0))),
            Clause::AgeAtLeast(n) => ("age_range", Value::Range(NumRange::at_least(*n))),
            Clause::AgeUnder(n) => ("age_range", Value::Range(NumRange::below(*n))),
            Clause::WeightBelow(n) => ("weight_range", Value::Range(NumRange::below(*n))),
            Clause::WeightAtLeast(n) => ("weight_range", Value::Range(NumRange::at_least(*n))),
            Clause::CrclBelow(n) => ("crcl_range", Value::Range(NumRange::below(*n))),
            Clause::CrclBetween(a, b) => ("crcl_range", Value::Range(NumRange::between(*a, *b))),
            Clause::Hepatic(h) => ("hepatic_min", Value::Enum(h.name().to_string())),
            Clause::Pregnancy => ("pregnancy", Value::Bool(true)),
            Clause::Condition(c) => ("condition", Value::text(c.clone())),
        }
    }
}

fn clauses_text(cs: &[Clause]) -> String {
    if cs.is_empty() {
        return "Standard dose".into();
    }
    cs.iter().map(Clause::text).collect::<Vec<_>>().join(" and ")
}

fn clause_values(cs: &[Clause]) -> BTreeMap<String, Value> {
    cs.iter().map(|c| c.column()).map(|(k, v)| (k.to_string(), v)).collect()
}

/// The patient every generated rule with a risk clause excludes.
pub fn safe_profile() -> PatientProfile {
    PatientProfile {
        age: Some(40.0),
        weight: Some(70.0),
        crcl: Some(100.0),
        hepatic_status: Some(HepaticStatus::None),
        pregnancy: Some(false),
        ..Default::default()
    }
}

/// A generated conditional rule row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRule {
    pub table: String,
    pub drug: EntityId,
    pub section: String,
    pub line: String,
    pub clauses: Vec<Clause>,
    pub max_daily_mg: Option<f64>,
}

impl GenRule {
    pub fn specificity(&self) -> usize {
        self.clauses.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEdge {
    pub src: EntityId,
    pub edge_type: String,
    pub dst: EntityId,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDoc {
    pub doc_id: String,
    pub stratum: String,
    pub drug: String,
    pub indications: Vec<String>,
    pub rules: Vec<GenRule>,
    pub edges: Vec<GenEdge>,
    pub markdown: String,
    pub gold: Vec<ExtractionRecord>,
}

impl SyntheticDoc {
    pub fn drug_id(&self) -> EntityId {
        EntityId::new(&self.drug)
    }

    pub fn rules_in(&self, table: &str) -> Vec<&GenRule> {
        self.rules.iter().filter(|r| r.table == table).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub docs: Vec<SyntheticDoc>,
}

impl SyntheticCorpus {
    pub fn corpus_docs(&self) -> Vec<CorpusDoc> {
        self.docs
            .iter()
            .map(|d| CorpusDoc {
                doc_id: d.doc_id.clone(),
                stratum: d.stratum.clone(),
                markdown: d.markdown.clone(),
                gold: Some(d.gold.clone()),
            })
            .collect()
    }

    pub fn gold_records(&self) -> usize {
        self.docs.iter().map(|d| d.gold.len()).sum()
    }

    /// Canonical gold facts; every gold record must canonicalize.
    pub fn gold_facts(&self, schema: &HybridSchema) -> FactMultiset {
        let facts: Vec<_> = self
            .docs
            .iter()
            .flat_map(|d| &d.gold)
            .map(|r| canonical_record(r, schema).expect("gold records conform to the schema"))
            .collect();
        FactMultiset::from_facts(&facts)
    }

    pub fn doc_for(&self, drug: &EntityId) -> Option<&SyntheticDoc> {
        self.docs.iter().find(|d| &d.drug_id() == drug)
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &GenEdge> {
        self.docs.iter().flat_map(|d| &d.edges)
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn drug_names(rng: &mut ChaCha8Rng, strata_idx: &[usize]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    strata_idx
        .iter()
        .map(|&s| loop {
            let n = rng.gen_range(2..=3);
            let stem: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
            let name = capitalize(&format!("{stem}{}", VOCAB[s].suffixes.choose(rng).expect("suffixes")));
            if seen.insert(name.to_lowercase()) {
                break name;
            }
        })
        .collect()
}

fn age_clause(rng: &mut ChaCha8Rng, risk_only: bool) -> Clause {
    match rng.gen_range(if risk_only { 1 } else { 0 }..5) {
        0 => Clause::Adults,
        1 => Clause::AgeAtLeast(65.0),
        2 => Clause::AgeAtLeast(75.0),
        3 => Clause::AgeUnder(12.0),
        _ => Clause::AgeUnder(18.0),
    }
}

fn random_clause(rng: &mut ChaCha8Rng, attr: Attribute, risk_only: bool) -> Clause {
    match attr {
        Attribute::Age => age_clause(rng, risk_only),
        Attribute::Weight => {
            if rng.gen_bool(0.6) {
                Clause::WeightBelow(*[40.0, 50.0].choose(rng).expect("non-empty"))
            } else {
                Clause::WeightAtLeast(*[100.0, 120.0].choose(rng).expect("non-empty"))
            }
        }
        Attribute::Crcl => match rng.gen_range(0..5) {
            0 => Clause::CrclBelow(15.0),
            1 => Clause::CrclBelow(30.0),
            2 => Clause::CrclBelow(60.0),
            3 => Clause::CrclBetween(15.0, 29.0),
            _ => Clause::CrclBetween(30.0, 59.0),
        },
        Attribute::HepaticStatus => Clause::Hepatic(
            *[HepaticStatus::Mild, HepaticStatus::Moderate, HepaticStatus::Severe].choose(rng).expect("non-empty"),
        ),
        Attribute::Pregnancy => Clause::Pregnancy,
        Attribute::Conditions => Clause::Condition(RISK_CONDITIONS.choose(rng).expect("non-empty").to_string()),
    }
}

/// `k` clauses over distinct attributes drawn from `attrs`.
fn clause_set(rng: &mut ChaCha8Rng, attrs: &[Attribute], k: usize, risk_only: bool) -> Vec<Clause> {
    let mut pool = attrs.to_vec();
    pool.shuffle(rng);
    let mut out: Vec<Clause> = pool.into_iter().take(k).map(|a| random_clause(rng, a, risk_only)).collect();
    out.sort_by_key(|c| c.attribute());
    out
}

const DOSE_ATTRS: [Attribute; 5] = Attribute::BLANKABLE;
const RISK_ATTRS: [Attribute; 6] = [
    Attribute::Age,
    Attribute::Weight,
    Attribute::Crcl,
    Attribute::HepaticStatus,
    Attribute::Pregnancy,
    Attribute::Conditions,
];

struct DocBuilder<'a> {
    doc_id: String,
    drug: &'a str,
    lines: BTreeSet<String>,
    rules: Vec<GenRule>,
    edges: Vec<GenEdge>,
    gold: Vec<ExtractionRecord>,
}

impl DocBuilder<'_> {
    fn fresh(&mut self, line: &str) -> bool {
        self.lines.insert(line.to_string())
    }

    fn row(&mut self, section: &str, line: &str, table: &str, specialist: Specialist, mut values: BTreeMap<String, Value>) {
        values.insert("drug".into(), Value::text(self.drug));
        self.gold.push(ExtractionRecord {
            target: RecordTarget::Relational { table: table.into(), values },
            prov: Provenance::new(&self.doc_id, section, line),
            specialist,
        });
    }

    fn rule(&mut self, section: &str, line: &str, table: &str, clauses: Vec<Clause>, max: Option<f64>) {
        self.rules.push(GenRule {
            table: table.into(),
            drug: EntityId::new(self.drug),
            section: section.into(),
            line: line.into(),
            clauses,
            max_daily_mg: max,
        });
    }

    fn edge(&mut self, section: &str, line: &str, src: (&str, &str), edge_type: &str, dst: (&str, &str), mechanism: Option<&str>) {
        let props = mechanism.map(|m| ("mechanism".to_string(), Value::text(m))).into_iter().collect();
        self.gold.push(ExtractionRecord {
            target: RecordTarget::Graph {
                src: NodeSpec::new(src.0, src.1),
                edge_type: edge_type.into(),
                dst: NodeSpec::new(dst.0, dst.1),
                props,
            },
            prov: Provenance::new(&self.doc_id, section, line),
            specialist: Specialist::Interaction,
        });
        self.edges.push(GenEdge {
            src: EntityId::new(src.1),
            edge_type: edge_type.into(),
            dst: EntityId::new(dst.1),
            line: line.into(),
        });
    }
}

const AMOUNTS_MG: &[u32] = &[5, 10, 20, 25, 40, 50, 100, 150, 200, 250, 400, 500, 600, 750, 1000];
const FREQS: &[(&str, f64)] = &[("once daily", 1.0), ("twice daily", 2.0), ("three times daily", 3.0), ("four times daily", 4.0)];

fn dose_phrase(rng: &mut ChaCha8Rng) -> (String, f64) {
    let (amount, unit) = match rng.gen_range(0..10) {
        0 => (*[1u32, 2].choose(rng).expect("non-empty"), "g"),
        1 => (*[50u32, 100, 200].choose(rng).expect("non-empty"), "mcg"),
        _ => (*AMOUNTS_MG.choose(rng).expect("non-empty"), "mg"),
    };
    let (freq, n) = *FREQS.choose(rng).expect("non-empty");
    let daily = convert(amount as f64 * n, unit, "mg").expect("known units");
    (format!("{amount} {unit} {freq}"), daily)
}

const DOSAGE_SECTION: &str = "Dosage and Administration";
const RENAL_SECTION: &str = "Renal Impairment";

fn gen_doc(rng: &mut ChaCha8Rng, i: usize, stratum: &str, vocab: &StratumVocab, drug: &str, others: &[String]) -> SyntheticDoc {
    let mut b = DocBuilder {
        doc_id: format!("doc-{i:03}"),
        drug,
        lines: BTreeSet::new(),
        rules: Vec::new(),
        edges: Vec::new(),
        gold: Vec::new(),
    };
    let mut md = format!("# {drug}\n\n{drug} prescribing information (synthetic).\n\n");

    // Indications
    let mut inds: Vec<&str> = vocab.indications.to_vec();
    inds.shuffle(rng);
    let indications: Vec<String> = inds[..rng.gen_range(2..=4)].iter().map(|s| s.to_string()).collect();
    md.push_str("## Indications and Usage\n\n");
    for ind in &indications {
        let line = format!("Indicated for {ind}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.row("Indications and Usage", &line, names::INDICATIONS, Specialist::Indication, BTreeMap::from([(
            "indication".to_string(),
            Value::text(ind.clone()),
        )]));
        b.rule("Indications and Usage", &line, names::INDICATIONS, vec![Clause::Condition(ind.clone())], None);
    }

    // Dosage, with crcl-conditional lines in a renal subsection
    let mut general = Vec::new();
    let mut renal = Vec::new();
    let n_cond = rng.gen_range(8..=11);
    let mut attempts = 0;
    while general.len() + renal.len() < n_cond + 1 && attempts < 200 {
        attempts += 1;
        let clauses = if general.is_empty() && renal.is_empty() {
            Vec::new()
        } else {
            let k = rng.gen_range(1..=2);
            clause_set(rng, &DOSE_ATTRS, k, false)
        };
        let (dose, daily) = dose_phrase(rng);
        let reduce = rng.gen_bool(0.4).then(|| {
            let free: Vec<Attribute> = DOSE_ATTRS
                .iter()
                .copied()
                .filter(|a| !clauses.iter().any(|c| c.attribute() == *a))
                .collect();
            let extra = clause_set(rng, &free, 1, true);
            (*[25u32, 50, 75].choose(rng).expect("non-empty"), extra)
        });
        let mut line = format!("{}: {dose}", clauses_text(&clauses));
        if let Some((pct, extra)) = &reduce {
            line.push_str(&format!("; reduce {pct}% if {}", clauses_text(extra)));
        }
        line.push('.');
        if !b.fresh(&line) {
            continue;
        }
        let all_attrs = clauses.iter().chain(reduce.iter().flat_map(|(_, e)| e.iter()));
        let section = if all_attrs.clone().any(|c| c.attribute() == Attribute::Crcl) { RENAL_SECTION } else { DOSAGE_SECTION };
        let mut first = clause_values(&clauses);
        first.insert("max_daily_dose".into(), Value::Number(daily));
        first.insert("dose_text".into(), Value::text(dose.clone()));
        let mut rows = vec![(clauses.clone(), daily, first)];
        if let Some((pct, extra)) = reduce {
            let mut merged = clauses.clone();
            merged.extend(extra);
            merged.sort_by_key(|c| c.attribute());
            let reduced = daily * (100.0 - pct as f64) / 100.0;
            let mut second = clause_values(&merged);
            second.insert("max_daily_dose".into(), Value::Number(reduced));
            second.insert("dose_text".into(), Value::text(format!("{dose} reduced by {pct}%")));
            rows.push((merged, reduced, second));
        }
        if section == RENAL_SECTION { renal.push((line, rows)) } else { general.push((line, rows)) }
    }
    // Rules are recorded in rendered order, which is row order in the store.
    md.push_str(&format!("## {DOSAGE_SECTION}\n\n"));
    for (l, _) in &general {
        md.push_str(&format!("- {l}\n"));
    }
    md.push_str("\n| Strength | Form |\n|---|---|\n| 100 mg | tablet |\n\n");
    if !renal.is_empty() {
        md.push_str(&format!("### {RENAL_SECTION}\n\n"));
        for (l, _) in &renal {
            md.push_str(&format!("- {l}\n"));
        }
    }
    let emitted = general.into_iter().map(|e| (DOSAGE_SECTION, e)).chain(renal.into_iter().map(|e| (RENAL_SECTION, e)));
    for (section, (line, rows)) in emitted {
        for (clauses, max, values) in rows {
            b.row(section, &line, names::DOSAGE, Specialist::Dosage, values);
            b.rule(section, &line, names::DOSAGE, clauses, Some(max));
        }
    }

    // Contraindications
    md.push_str("\n## Contraindications\n\n");
    let n = rng.gen_range(5..=8);
    let mut made = 0;
    for _ in 0..100 {
        if made == n {
            break;
        }
        let k = rng.gen_range(1..=2);
        let clauses = clause_set(rng, &RISK_ATTRS, k, true);
        let line = format!("Contraindicated in {}.", clauses_text(&clauses));
        if !b.fresh(&line) {
            continue;
        }
        md.push_str(&format!("- {line}\n"));
        b.row("Contraindications", &line, names::CONTRAINDICATIONS, Specialist::Contraindication, clause_values(&clauses));
        b.rule("Contraindications", &line, names::CONTRAINDICATIONS, clauses, None);
        made += 1;
    }

    // Specific populations
    md.push_str("\n## Use in Specific Populations\n\n");
    let n = rng.gen_range(4..=7);
    let mut made = 0;
    for _ in 0..100 {
        if made == n {
            break;
        }
        let k = rng.gen_range(1..=2);
        let clauses = clause_set(rng, &DOSE_ATTRS, k, true);
        let text = clauses_text(&clauses);
        let line = format!("Avoid in {text}.");
        if !b.fresh(&line) {
            continue;
        }
        md.push_str(&format!("- {line}\n"));
        let mut values = clause_values(&clauses);
        values.insert("population".into(), Value::text(text));
        values.insert("recommendation".into(), Value::text("avoid"));
        b.row("Use in Specific Populations", &line, names::SPECIAL_POPULATIONS, Specialist::SpecialPopulation, values);
        b.rule("Use in Specific Populations", &line, names::SPECIAL_POPULATIONS, clauses, None);
        made += 1;
    }

    // Interactions
    use names::*;
    let section = "Drug Interactions";
    md.push_str(&format!("\n## {section}\n\n"));
    let mut partners: Vec<&String> = others.iter().filter(|o| o.as_str() != drug).collect();
    partners.shuffle(rng);
    for other in partners.into_iter().take(rng.gen_range(3..=5)) {
        let mech = *MECHANISMS.choose(rng).expect("non-empty");
        let line = format!("Interacts with {other}: {mech}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.edge(section, &line, (DRUG, drug), INTERACTS_WITH, (DRUG, other), Some(mech));
    }
    let mut pool: Vec<&str> = vocab.classes.iter().chain(SHARED_CLASSES).copied().collect();
    pool.shuffle(rng);
    let classes: Vec<&str> = pool[..rng.gen_range(1..=2)].to_vec();
    for c in &classes {
        let line = format!("Member of class {c}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.edge(section, &line, (DRUG, drug), MEMBER_OF, (CLASS, c), None);
    }
    if rng.gen_bool(0.35) {
        let all: Vec<&str> = VOCAB.iter().flat_map(|v| v.classes.iter()).chain(SHARED_CLASSES).copied().collect();
        let a = classes[0];
        let other = loop {
            let c = *all.choose(rng).expect("non-empty");
            if c != a {
                break c;
            }
        };
        let mech = *MECHANISMS.choose(rng).expect("non-empty");
        let line = format!("Class {a} interacts with class {other}: {mech}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.edge(section, &line, (CLASS, a), CLASS_INTERACTS_WITH, (CLASS, other), Some(mech));
    }

    // Composition
    let section = "Composition";
    md.push_str(&format!("\n## {section}\n\n"));
    let mut ingredients = vec![format!("{} {}", drug.to_lowercase(), SALTS.choose(rng).expect("non-empty"))];
    if rng.gen_bool(0.5) {
        ingredients.push(EXCIPIENTS.choose(rng).expect("non-empty").to_string());
    }
    for ing in &ingredients {
        let line = format!("Contains ingredient {ing}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.edge(section, &line, (DRUG, drug), HAS_INGREDIENT, (INGREDIENT, ing), None);
    }
    for ing in &ingredients {
        let class = if EXCIPIENTS.contains(&ing.as_str()) { "excipients" } else { CHEM_CLASSES.choose(rng).expect("non-empty") };
        let line = format!("Ingredient {ing} belongs to class {class}.");
        b.fresh(&line);
        md.push_str(&format!("- {line}\n"));
        b.edge(section, &line, (INGREDIENT, ing), BELONGS_TO, (CLASS, class), None);
    }

    if rng.gen_bool(0.5) {
        md.push_str(&format!("\n## Manufacturer Address\n\n{drug} Labs, 1 Example Road.\n"));
    }

    SyntheticDoc {
        doc_id: b.doc_id,
        stratum: stratum.to_string(),
        drug: drug.to_string(),
        indications,
        rules: b.rules,
        edges: b.edges,
        markdown: md,
        gold: b.gold,
    }
}

/// Generates `n_docs` monographs round-robin over `strata` (the default
/// five when empty). Deterministic per seed.
pub fn generate_corpus(seed: u64, n_docs: usize, strata: &[String]) -> SyntheticCorpus {
    let strata: Vec<String> =
        if strata.is_empty() { DEFAULT_STRATA.iter().map(|s| s.to_string()).collect() } else { strata.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..n_docs).map(|i| i % strata.len()).collect();
    let names = drug_names(&mut rng, &idx.iter().map(|s| s % VOCAB.len()).collect::<Vec<_>>());
    let docs = (0..n_docs)
        .map(|i| gen_doc(&mut rng, i, &strata[idx[i]], &VOCAB[idx[i] % VOCAB.len()], &names[i], &names))
        .collect();
    SyntheticCorpus { seed, docs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_doc_per_stratum() {
        let c = generate_corpus(7, 5, &[]);
        let strata: BTreeSet<_> = c.docs.iter().map(|d| d.stratum.as_str()).collect();
        assert_eq!(strata.len(), 5);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(3, 6, &[]);
        let b = generate_corpus(3, 6, &[]);
        assert_eq!(a, b);
        assert_ne!(a.docs[0].markdown, generate_corpus(4, 6, &[]).docs[0].markdown);
    }

    #[test]
    fn safe_profile_fails_every_risk_rule() {
        let c = generate_corpus(11, 10, &[]);
        let safe = safe_profile();
        for d in &c.docs {
            for r in d.rules.iter().filter(|r| r.table != names::INDICATIONS && r.table != names::DOSAGE) {
                assert!(r.clauses.iter().any(|cl| cl.holds(&safe) == Some(false)), "{}", r.line);
            }
        }
    }

    #[test]
    fn extraction_reproduces_gold() {
        use crate::ingest::{build_store, store_facts, FactMultiset};
        let c = generate_corpus(5, 12, &[]);
        let schema = crate::schema::standard_schema();
        let gold = c.gold_facts(&schema);
        let out = build_store(&c.corpus_docs(), schema, crate::par::Execution::Sequential, None).unwrap();
        assert!(out.report.quarantined.is_empty(), "{:?}", out.report.quarantined);
        let facts = store_facts(&out.store);
        let got = FactMultiset::from_facts(&facts);
        let missing: Vec<_> = gold.0.keys().filter(|k| !got.0.contains_key(*k)).take(3).collect();
        let extra: Vec<_> = got.0.keys().filter(|k| !gold.0.contains_key(*k)).take(3).collect();
        assert_eq!(got, gold, "missing {missing:?}\nextra {extra:?}");
    }
}
