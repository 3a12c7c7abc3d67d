//! Statement-level decomposition of Python cell source.
//!
//! The scanner groups physical lines into logical lines (tracking strings,
//! bracket depth, and backslash continuations), checks block indentation,
//! and yields one unit per simple statement and one per compound-statement
//! header. It never executes or fully parses the code; cells it cannot
//! scan are flagged unparseable and yield zero units.

use super::{sanitize_cell, Cell, ExcludedLine, Instruction, InstructionKind};

/// Everything extraction produces for one cell. `blank_lines` and
/// `comment_lines` list lines outside every instruction span, so the four
/// line categories (excluded, blank, comment, instruction-covered)
/// partition the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellExtraction {
    pub notebook_id: String,
    pub cell_index: usize,
    pub instructions: Vec<Instruction>,
    pub excluded_lines: Vec<ExcludedLine>,
    pub blank_lines: Vec<usize>,
    pub comment_lines: Vec<usize>,
    /// Why the cell could not be scanned; set implies zero instructions.
    pub unparseable: Option<String>,
}

/// One maximal run of physical lines forming a single statement context.
/// The last physical line is implied by `start` plus the newline count in
/// `text`; unit spans are derived the same way.
#[derive(Debug)]
struct LogicalLine {
    /// 1-based first physical line.
    start: usize,
    /// Physical lines joined with `\n`, verbatim.
    text: String,
}

#[derive(Debug)]
struct ScanIssue {
    line: usize,
    message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StringState {
    /// Short string: quote char, and whether a backslash escape is pending
    /// at a line boundary.
    Short(char),
    Triple(char),
}

/// Character classes produced by the in-line scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CharClass {
    /// Code at the given bracket depth.
    Code(i32),
    StringOrComment,
}

/// Scans one logical line's text, classifying every character as
/// depth-tagged code or string/comment content. The text is assumed to
/// start outside any string (guaranteed by logical-line grouping).
pub(crate) fn classify_chars(text: &str) -> Vec<(char, CharClass)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::with_capacity(chars.len());
    let mut depth: i32 = 0;
    let mut string: Option<StringState> = None;
    let mut escape = false;
    let mut comment = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            comment = false;
            // A backslash before the newline escapes the newline itself.
            escape = false;
            out.push((c, CharClass::StringOrComment));
            i += 1;
            continue;
        }
        if comment {
            out.push((c, CharClass::StringOrComment));
            i += 1;
            continue;
        }
        match string {
            Some(StringState::Short(q)) => {
                out.push((c, CharClass::StringOrComment));
                if escape {
                    escape = false;
                } else if c == '\\' {
                    escape = true;
                } else if c == q {
                    string = None;
                }
                i += 1;
            }
            Some(StringState::Triple(q)) => {
                if escape {
                    escape = false;
                    out.push((c, CharClass::StringOrComment));
                    i += 1;
                } else if c == '\\' {
                    escape = true;
                    out.push((c, CharClass::StringOrComment));
                    i += 1;
                } else if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    out.push((c, CharClass::StringOrComment));
                    out.push((q, CharClass::StringOrComment));
                    out.push((q, CharClass::StringOrComment));
                    string = None;
                    i += 3;
                } else {
                    out.push((c, CharClass::StringOrComment));
                    i += 1;
                }
            }
            None => match c {
                '#' => {
                    comment = true;
                    out.push((c, CharClass::StringOrComment));
                    i += 1;
                }
                '\'' | '"' => {
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        string = Some(StringState::Triple(c));
                        out.push((c, CharClass::StringOrComment));
                        out.push((c, CharClass::StringOrComment));
                        out.push((c, CharClass::StringOrComment));
                        i += 3;
                    } else {
                        string = Some(StringState::Short(c));
                        out.push((c, CharClass::StringOrComment));
                        i += 1;
                    }
                }
                '(' | '[' | '{' => {
                    out.push((c, CharClass::Code(depth)));
                    depth += 1;
                    i += 1;
                }
                ')' | ']' | '}' => {
                    depth -= 1;
                    out.push((c, CharClass::Code(depth)));
                    i += 1;
                }
                _ => {
                    out.push((c, CharClass::Code(depth)));
                    i += 1;
                }
            },
        }
    }
    out
}

/// Groups physical lines into logical lines, recording blank and
/// comment-only lines met between them.
fn group_logical_lines(
    lines: &[&str],
) -> Result<(Vec<LogicalLine>, Vec<usize>, Vec<usize>), ScanIssue> {
    let mut logical = Vec::new();
    let mut blank = Vec::new();
    let mut comment = Vec::new();

    let mut depth: i32 = 0;
    let mut string: Option<StringState> = None;
    let mut escape_pending = false;
    let mut current_start: Option<usize> = None;
    let mut current_text = String::new();

    for (idx, &line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let open = current_start.is_some();
        if !open {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                blank.push(line_no);
                continue;
            }
            if trimmed.starts_with('#') {
                comment.push(line_no);
                continue;
            }
            current_start = Some(line_no);
            current_text.clear();
        } else {
            current_text.push('\n');
        }
        current_text.push_str(line);

        // Character scan of this physical line, continuing carried state.
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        let mut continuation = false;
        if escape_pending {
            // The backslash escaped the newline; the string resumes here.
            escape_pending = false;
        }
        while i < chars.len() {
            let c = chars[i];
            match string {
                Some(StringState::Short(q)) => {
                    if c == '\\' {
                        if i + 1 == chars.len() {
                            escape_pending = true;
                        }
                        i += 2;
                        continue;
                    }
                    if c == q {
                        string = None;
                    }
                    i += 1;
                }
                Some(StringState::Triple(q)) => {
                    if c == '\\' {
                        i += 2;
                        continue;
                    }
                    if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                        string = None;
                        i += 3;
                    } else {
                        i += 1;
                    }
                }
                None => match c {
                    '#' => {
                        i = chars.len();
                    }
                    '\'' | '"' => {
                        if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                            string = Some(StringState::Triple(c));
                            i += 3;
                        } else {
                            string = Some(StringState::Short(c));
                            i += 1;
                        }
                    }
                    '(' | '[' | '{' => {
                        depth += 1;
                        i += 1;
                    }
                    ')' | ']' | '}' => {
                        depth -= 1;
                        if depth < 0 {
                            return Err(ScanIssue {
                                line: line_no,
                                message: "unbalanced closing bracket".to_string(),
                            });
                        }
                        i += 1;
                    }
                    '\\' => {
                        if chars[i + 1..].iter().all(|c| c.is_whitespace()) {
                            continuation = true;
                            i = chars.len();
                        } else {
                            return Err(ScanIssue {
                                line: line_no,
                                message: "unexpected character after line continuation".to_string(),
                            });
                        }
                    }
                    _ => i += 1,
                },
            }
        }

        // Unterminated short string at end of line (no escape) is fatal.
        if let Some(StringState::Short(_)) = string {
            if !escape_pending {
                return Err(ScanIssue {
                    line: line_no,
                    message: "unterminated string literal".to_string(),
                });
            }
        }

        let continues = depth > 0
            || matches!(string, Some(StringState::Triple(_)))
            || escape_pending
            || continuation;
        if !continues {
            logical.push(LogicalLine {
                start: current_start.take().expect("logical line open"),
                text: std::mem::take(&mut current_text),
            });
        }
    }

    if let Some(start) = current_start {
        let message = if depth > 0 {
            "unbalanced opening bracket at end of cell"
        } else if string.is_some() {
            "unterminated string at end of cell"
        } else {
            "line continuation at end of cell"
        };
        return Err(ScanIssue {
            line: start,
            message: message.to_string(),
        });
    }
    Ok((logical, blank, comment))
}

const COMPOUND_KEYWORDS: &[&str] = &[
    "if", "elif", "else", "for", "while", "try", "except", "finally", "with", "def", "class",
    "async", "match", "case",
];

/// Soft keywords head a compound statement only when a block colon exists.
const SOFT_KEYWORDS: &[&str] = &["match", "case"];

fn first_word(text: &str) -> &str {
    let trimmed = text.trim_start();
    let end = trimmed
        .find(|c: char| !c.is_alphanumeric() && c != '_')
        .unwrap_or(trimmed.len());
    &trimmed[..end]
}

/// Maps each character index of `text` to its 1-based physical line,
/// given that `text` begins on `start_line`.
fn line_of_offsets(text: &str, start_line: usize) -> Vec<usize> {
    let mut line = start_line;
    text.chars()
        .map(|c| {
            let current = line;
            if c == '\n' {
                line += 1;
            }
            current
        })
        .collect()
}

struct UnitDraft {
    start_line: usize,
    end_line: usize,
    source: String,
    kind: InstructionKind,
}

/// Splits one logical line into statement units.
fn split_units(line: &LogicalLine) -> Result<Vec<UnitDraft>, ScanIssue> {
    let classified = classify_chars(&line.text);
    let chars: Vec<char> = classified.iter().map(|(c, _)| *c).collect();
    let lines_at = line_of_offsets(&line.text, line.start);

    // Depth-0 code positions of ':' and ';'.
    let colon = classified
        .iter()
        .position(|(c, class)| *c == ':' && *class == CharClass::Code(0));
    let word = first_word(&line.text);
    let is_decorator = line.text.trim_start().starts_with('@');
    let is_hard_compound = COMPOUND_KEYWORDS.contains(&word) && !SOFT_KEYWORDS.contains(&word);
    let is_soft_compound = SOFT_KEYWORDS.contains(&word) && colon.is_some();

    let span_of = |range: std::ops::Range<usize>| -> Option<(usize, usize, String)> {
        let segment: String = chars[range.clone()].iter().collect();
        let trimmed = segment.trim();
        if trimmed.is_empty() {
            return None;
        }
        let seg_chars: Vec<char> = segment.chars().collect();
        let lead_chars = seg_chars.len() - segment.trim_start().chars().count();
        let trail_chars = seg_chars.len() - segment.trim_end().chars().count();
        let first_idx = range.start + lead_chars;
        let last_idx = range.end - trail_chars - 1;
        Some((lines_at[first_idx], lines_at[last_idx], trimmed.to_string()))
    };

    // A segment carries a statement when anything outside comments remains;
    // string content counts (a bare literal is an expression statement).
    let segment_has_statement = |text: &str| -> bool {
        let cls = classify_chars(text);
        let mut in_comment = false;
        for (c, class) in cls {
            if c == '\n' {
                in_comment = false;
                continue;
            }
            if in_comment {
                continue;
            }
            match class {
                CharClass::Code(_) => {
                    if !c.is_whitespace() {
                        return true;
                    }
                }
                CharClass::StringOrComment => {
                    if c == '#' {
                        in_comment = true;
                    } else if !c.is_whitespace() {
                        return true;
                    }
                }
            }
        }
        false
    };

    let mut units = Vec::new();
    if is_decorator {
        if let Some((s, e, src)) = span_of(0..chars.len()) {
            units.push(UnitDraft {
                start_line: s,
                end_line: e,
                source: src,
                kind: InstructionKind::Simple,
            });
        }
        return Ok(units);
    }

    if is_hard_compound || is_soft_compound {
        let colon_idx = colon.ok_or(ScanIssue {
            line: line.start,
            message: format!("compound statement `{word}` has no block colon"),
        })?;
        let (s, e, src) = span_of(0..colon_idx + 1).expect("header segment contains the keyword");
        units.push(UnitDraft {
            start_line: s,
            end_line: e,
            source: src,
            kind: InstructionKind::CompoundHeader,
        });
        // Inline body after the colon: simple statements split on ';'.
        let body = colon_idx + 1..chars.len();
        append_simple_units(
            &classified,
            &chars,
            &lines_at,
            body,
            &segment_has_statement,
            &span_of,
            &mut units,
        );
        return Ok(units);
    }

    append_simple_units(
        &classified,
        &chars,
        &lines_at,
        0..chars.len(),
        &segment_has_statement,
        &span_of,
        &mut units,
    );
    if units.is_empty() {
        return Err(ScanIssue {
            line: line.start,
            message: "statement without content".to_string(),
        });
    }
    Ok(units)
}

/// Splits `range` on depth-0 semicolons and appends one Simple unit per
/// non-empty statement segment.
fn append_simple_units(
    classified: &[(char, CharClass)],
    _chars: &[char],
    _lines_at: &[usize],
    range: std::ops::Range<usize>,
    segment_has_statement: &dyn Fn(&str) -> bool,
    span_of: &dyn Fn(std::ops::Range<usize>) -> Option<(usize, usize, String)>,
    units: &mut Vec<UnitDraft>,
) {
    let mut cut = range.start;
    let mut boundaries = Vec::new();
    for i in range.clone() {
        if classified[i].0 == ';' && classified[i].1 == CharClass::Code(0) {
            boundaries.push(cut..i);
            cut = i + 1;
        }
    }
    boundaries.push(cut..range.end);
    for segment in boundaries {
        if let Some((s, e, src)) = span_of(segment) {
            if segment_has_statement(&src) {
                units.push(UnitDraft {
                    start_line: s,
                    end_line: e,
                    source: src,
                    kind: InstructionKind::Simple,
                });
            }
        }
    }
}

fn indent_of(text: &str) -> &str {
    let end = text
        .find(|c: char| c != ' ' && c != '\t')
        .unwrap_or(text.len());
    &text[..end]
}

/// Validates block structure over the logical lines: headers without an
/// inline body must be followed by a deeper-indented line; dedents must
/// land on an enclosing level.
fn check_blocks(
    logical: &[LogicalLine],
    units_per_line: &[Vec<UnitDraft>],
) -> Result<(), ScanIssue> {
    let mut stack: Vec<String> = vec![String::new()];
    let mut expecting_block = false;
    for (line, units) in logical.iter().zip(units_per_line) {
        let first_physical = line.text.split('\n').next().unwrap_or("");
        let indent = indent_of(first_physical).to_string();
        if expecting_block {
            let top = stack.last().expect("stack non-empty");
            if indent.len() > top.len() && indent.starts_with(top.as_str()) {
                stack.push(indent.clone());
                expecting_block = false;
            } else {
                return Err(ScanIssue {
                    line: line.start,
                    message: "expected an indented block".to_string(),
                });
            }
        } else {
            loop {
                let top = stack.last().expect("stack non-empty");
                if indent == *top {
                    break;
                }
                if indent.len() > top.len() && indent.starts_with(top.as_str()) {
                    return Err(ScanIssue {
                        line: line.start,
                        message: "unexpected indent".to_string(),
                    });
                }
                if stack.len() == 1 {
                    return Err(ScanIssue {
                        line: line.start,
                        message: "inconsistent indentation".to_string(),
                    });
                }
                stack.pop();
            }
        }
        // A header with no inline body opens a block.
        let opens_block = units.len() == 1 && units[0].kind == InstructionKind::CompoundHeader;
        if opens_block {
            expecting_block = true;
        }
    }
    if expecting_block {
        let last = logical.last().expect("at least one line");
        return Err(ScanIssue {
            line: last.start,
            message: "expected an indented block at end of cell".to_string(),
        });
    }
    Ok(())
}

/// Decomposes one code cell into instructions. Magic/shell lines are
/// excluded first; scan failures flag the cell unparseable with zero
/// instructions rather than failing the run.
pub fn extract_instructions(cell: &Cell, notebook_id: &str) -> CellExtraction {
    let sanitized = sanitize_cell(&cell.source);
    let lines: Vec<&str> = sanitized.code.split('\n').collect();
    let excluded_set: std::collections::BTreeSet<usize> =
        sanitized.excluded.iter().map(|e| e.line).collect();

    let mut extraction = CellExtraction {
        notebook_id: notebook_id.to_string(),
        cell_index: cell.index,
        instructions: Vec::new(),
        excluded_lines: sanitized.excluded.clone(),
        blank_lines: Vec::new(),
        comment_lines: Vec::new(),
        unparseable: None,
    };
    // A cell that is empty after sanitizing has only excluded/blank lines.
    let fail = |mut extraction: CellExtraction, issue: ScanIssue| {
        extraction.instructions.clear();
        extraction.blank_lines.clear();
        extraction.comment_lines.clear();
        extraction.unparseable = Some(format!("line {}: {}", issue.line, issue.message));
        extraction
    };

    let (logical, blank, comment) = match group_logical_lines(&lines) {
        Ok(parts) => parts,
        Err(issue) => return fail(extraction, issue),
    };
    // Blank lines created by sanitization stay categorized as excluded.
    extraction.blank_lines = blank
        .into_iter()
        .filter(|l| !excluded_set.contains(l))
        .collect();
    extraction.comment_lines = comment;

    let mut units_per_line = Vec::with_capacity(logical.len());
    for line in &logical {
        match split_units(line) {
            Ok(units) => units_per_line.push(units),
            Err(issue) => return fail(extraction, issue),
        }
    }
    if let Err(issue) = check_blocks(&logical, &units_per_line) {
        return fail(extraction, issue);
    }

    let mut ordinal = 0usize;
    for units in units_per_line {
        for unit in units {
            extraction.instructions.push(Instruction {
                notebook_id: notebook_id.to_string(),
                cell_index: cell.index,
                ordinal,
                start_line: unit.start_line,
                end_line: unit.end_line,
                source: unit.source,
                kind: unit.kind,
            });
            ordinal += 1;
        }
    }

    // Safety net: every line must fall into exactly one category. A gap
    // means the scanner mis-handled the cell; flag it rather than emit
    // wrong provenance.
    if let Err(message) = verify_line_coverage(&cell.source, &extraction) {
        return fail(
            extraction,
            ScanIssue {
                line: 0,
                message: format!("line coverage violated: {message}"),
            },
        );
    }
    extraction
}

/// Checks the reconstruction invariant: excluded, blank, comment, and
/// instruction-covered lines partition the cell's lines. Returns a
/// description of the first violation.
pub fn verify_line_coverage(source: &str, extraction: &CellExtraction) -> Result<(), String> {
    let line_count = source.split('\n').count();
    #[derive(PartialEq, Clone, Copy, Debug)]
    enum Category {
        Excluded,
        Blank,
        Comment,
        Instruction,
    }
    let mut categories: Vec<Option<Category>> = vec![None; line_count + 1];
    let mut assign = |line: usize, cat: Category| -> Result<(), String> {
        if line == 0 || line > line_count {
            return Err(format!("line {line} out of bounds (cell has {line_count})"));
        }
        match categories[line] {
            None => {
                categories[line] = Some(cat);
                Ok(())
            }
            Some(prev) if prev == cat => Ok(()),
            Some(prev) => Err(format!("line {line} categorized both {prev:?} and {cat:?}")),
        }
    };
    for e in &extraction.excluded_lines {
        assign(e.line, Category::Excluded)?;
    }
    for &l in &extraction.blank_lines {
        assign(l, Category::Blank)?;
    }
    for &l in &extraction.comment_lines {
        assign(l, Category::Comment)?;
    }
    for unit in &extraction.instructions {
        if unit.start_line > unit.end_line {
            return Err(format!(
                "instruction {} has inverted span {}..{}",
                unit.ordinal, unit.start_line, unit.end_line
            ));
        }
        for line in unit.start_line..=unit.end_line {
            assign(line, Category::Instruction)?;
        }
    }
    for (line, cat) in categories.iter().enumerate().skip(1) {
        if cat.is_none() {
            return Err(format!("line {line} not covered by any category"));
        }
    }
    // Ordinals strictly increasing in source order.
    for pair in extraction.instructions.windows(2) {
        if pair[1].ordinal <= pair[0].ordinal {
            return Err("ordinals not strictly increasing".to_string());
        }
        if (pair[1].start_line, pair[1].end_line) < (pair[0].start_line, pair[0].end_line)
            && pair[1].start_line < pair[0].start_line
        {
            return Err("instructions out of source order".to_string());
        }
    }
    Ok(())
}
