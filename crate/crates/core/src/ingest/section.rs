use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{IngestError, Specialist};

/// Header given to text that precedes the first heading.
pub const PREAMBLE: &str = "Preamble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionBlock {
    pub header: String,
    /// Heading level (1 for `#`); 0 for the preamble.
    pub depth: usize,
    /// Headers of the enclosing headings, outermost first.
    pub path: Vec<String>,
    pub body: String,
    /// Pipe tables in the body, as rows of cells (separator rows dropped).
    pub tables: Vec<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionedDocument {
    pub doc_id: String,
    pub blocks: Vec<SectionBlock>,
}

impl SectionedDocument {
    /// Header of the first top-level heading, which names the product.
    pub fn title(&self) -> Option<&str> {
        self.blocks.iter().find(|b| b.depth == 1).map(|b| b.header.as_str())
    }

    /// Rebuilds Markdown from the blocks.
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            if b.depth > 0 {
                out.push_str(&"#".repeat(b.depth));
                out.push(' ');
                out.push_str(&b.header);
                out.push('\n');
            }
            out.push_str(&b.body);
            out.push('\n');
        }
        out
    }
}

/// Statement lines of a section body: bullets or plain lines, tables excluded.
pub fn statement_lines(body: &str) -> impl Iterator<Item = &str> {
    body.lines()
        .map(|l| l.trim().trim_start_matches("- ").trim())
        .filter(|l| !l.is_empty() && !l.starts_with('|'))
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &line[hashes..];
    if !rest.starts_with(' ') && !rest.is_empty() {
        return None;
    }
    let text = rest.trim().trim_end_matches('#').trim();
    (!text.is_empty()).then_some((hashes, text))
}

fn is_separator_row(cells: &[String]) -> bool {
    cells.iter().all(|c| {
        let c = c.trim();
        !c.is_empty() && c.trim_matches(':').chars().all(|ch| ch == '-')
    })
}

fn split_row(line: &str) -> Vec<String> {
    let inner = line.trim().trim_start_matches('|').trim_end_matches('|');
    inner.split('|').map(|c| c.trim().to_string()).collect()
}

fn parse_tables(body: &str) -> Vec<Vec<Vec<String>>> {
    let mut tables = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    for line in body.lines() {
        if line.trim_start().starts_with('|') {
            let cells = split_row(line);
            if !is_separator_row(&cells) {
                current.push(cells);
            }
        } else if !current.is_empty() {
            tables.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tables.push(current);
    }
    tables
}

fn finish(header: String, depth: usize, path: Vec<String>, lines: &[&str]) -> SectionBlock {
    let body = lines.join("\n").trim().to_string();
    let tables = parse_tables(&body);
    SectionBlock { header, depth, path, body, tables }
}

/// Splits Markdown into one block per ATX heading, in source order.
pub fn section_markdown(doc_id: &str, markdown: &str) -> Result<SectionedDocument, IngestError> {
    if markdown.trim().is_empty() {
        return Err(IngestError::EmptyDocument(doc_id.to_string()));
    }
    let mut blocks = Vec::new();
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(String, usize, Vec<String>)> = None;
    let mut lines: Vec<&str> = Vec::new();
    let mut in_fence = false;

    for line in markdown.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        let h = if in_fence { None } else { heading(line) };
        let Some((depth, text)) = h else {
            lines.push(line);
            continue;
        };
        match current.take() {
            Some((header, d, path)) => blocks.push(finish(header, d, path, &lines)),
            None if lines.iter().any(|l| !l.trim().is_empty()) => {
                blocks.push(finish(PREAMBLE.into(), 0, Vec::new(), &lines))
            }
            None => {}
        }
        lines.clear();
        while stack.last().is_some_and(|(d, _)| *d >= depth) {
            stack.pop();
        }
        let path = stack.iter().map(|(_, h)| h.clone()).collect();
        stack.push((depth, text.to_string()));
        current = Some((text.to_string(), depth, path));
    }
    match current {
        Some((header, d, path)) => blocks.push(finish(header, d, path, &lines)),
        None => blocks.push(finish(PREAMBLE.into(), 0, Vec::new(), &lines)),
    }
    Ok(SectionedDocument { doc_id: doc_id.to_string(), blocks })
}

/// Header-pattern routing table. The first matching pattern wins; a block
/// whose own header matches nothing is routed by its nearest enclosing
/// header, and otherwise takes the null route.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    routes: Vec<(Regex, Specialist)>,
}

impl Dispatcher {
    pub fn new(routes: Vec<(Regex, Specialist)>) -> Self {
        Dispatcher { routes }
    }

    fn match_header(&self, header: &str) -> Option<Specialist> {
        self.routes.iter().find(|(re, _)| re.is_match(header)).map(|(_, s)| *s)
    }

    pub fn dispatch(&self, block: &SectionBlock) -> Option<Specialist> {
        std::iter::once(block.header.as_str())
            .chain(block.path.iter().rev().map(String::as_str))
            .find_map(|h| self.match_header(h))
    }
}

impl Default for Dispatcher {
    fn default() -> Self {
        let r = |p: &str| Regex::new(p).expect("routing pattern");
        Dispatcher::new(vec![
            (r(r"(?i)^contraindications?\b"), Specialist::Contraindication),
            (r(r"(?i)^dosage\b"), Specialist::Dosage),
            (r(r"(?i)^(drug interactions?|interactions|composition|clinical pharmacology)\b"),
             Specialist::Interaction),
            (r(r"(?i)^(use in specific populations|specific populations|special populations)\b"),
             Specialist::SpecialPopulation),
            (r(r"(?i)^indications?\b"), Specialist::Indication),
        ])
    }
}
