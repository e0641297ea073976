//! Minimal PDF 1.4 writer for markdown reports.
//!
//! US-Letter pages with 54 pt margins, one built-in Type1 font (Courier),
//! headings at 20/16/14 pt, body at 11 pt, fenced code at 10 pt. Lines wrap
//! greedily assuming each character is half the font size wide; every
//! source line starts a new output line. Each markdown block becomes one
//! `BT ... ET` text object per page it touches.

use std::fmt::Write as _;

pub const PAGE_WIDTH: f64 = 612.0;
pub const PAGE_HEIGHT: f64 = 792.0;
pub const MARGIN: f64 = 54.0;
pub const BODY_SIZE: f64 = 11.0;
pub const CODE_SIZE: f64 = 10.0;
pub const HEADING_SIZES: [f64; 3] = [20.0, 16.0, 14.0];

pub fn leading(size: f64) -> f64 {
    (1.25 * size).ceil()
}

#[derive(Debug, Clone, PartialEq)]
enum BlockKind {
    Heading(usize),
    Paragraph,
    Bullets,
    Code,
    Blank,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    kind: BlockKind,
    lines: Vec<String>,
}

fn parse_blocks(text: &str) -> Vec<Block> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut in_code = false;
    let push = |blocks: &mut Vec<Block>, kind: BlockKind, line: String| match blocks.last_mut() {
        Some(b) if b.kind == kind && !matches!(kind, BlockKind::Heading(_)) => b.lines.push(line),
        _ => blocks.push(Block {
            kind,
            lines: vec![line],
        }),
    };
    for raw in text.lines() {
        let line = raw.trim_end_matches('\r');
        if line.trim_start().starts_with("```") {
            if in_code {
                in_code = false;
            } else {
                in_code = true;
                blocks.push(Block {
                    kind: BlockKind::Code,
                    lines: vec![],
                });
            }
            continue;
        }
        if in_code {
            blocks
                .last_mut()
                .expect("code block opened")
                .lines
                .push(line.to_string());
            continue;
        }
        if line.trim().is_empty() {
            push(&mut blocks, BlockKind::Blank, String::new());
        } else if let Some(h) = line.strip_prefix("### ") {
            push(&mut blocks, BlockKind::Heading(3), h.trim().to_string());
        } else if let Some(h) = line.strip_prefix("## ") {
            push(&mut blocks, BlockKind::Heading(2), h.trim().to_string());
        } else if let Some(h) = line.strip_prefix("# ") {
            push(&mut blocks, BlockKind::Heading(1), h.trim().to_string());
        } else if let Some(item) = line.strip_prefix("- ") {
            push(&mut blocks, BlockKind::Bullets, item.to_string());
        } else {
            push(&mut blocks, BlockKind::Paragraph, line.to_string());
        }
    }
    blocks
}

/// Greedy word wrap to at most `width` characters; over-long words are split.
fn wrap(line: &str, width: usize) -> Vec<String> {
    let width = width.max(1);
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in line.split(' ') {
        let mut word: Vec<char> = word.chars().collect();
        loop {
            let cur_len = cur.chars().count();
            let need = if cur.is_empty() {
                word.len()
            } else {
                cur_len + 1 + word.len()
            };
            if need <= width {
                if !cur.is_empty() {
                    cur.push(' ');
                }
                cur.extend(word.iter());
                break;
            }
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            let rest = word.split_off(width);
            out.push(word.iter().collect());
            word = rest;
        }
    }
    out.push(cur);
    out
}

/// PDF literal string body: escapes delimiters, maps Latin-1 to octal
/// escapes (WinAnsi) and anything else to '?'.
fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' | '(' | ')' => {
                s.push('\\');
                s.push(c);
            }
            ' '..='~' => s.push(c),
            '\t' => s.push_str("    "),
            c if (0xA0..=0xFF).contains(&(c as u32)) => {
                let _ = write!(s, "\\{:03o}", c as u32);
            }
            _ => s.push('?'),
        }
    }
    s
}

struct Line {
    size: f64,
    indent: f64,
    text: String,
}

/// Page content streams, one string per page.
fn layout(text: &str) -> Vec<String> {
    let top = PAGE_HEIGHT - MARGIN;
    let usable = PAGE_WIDTH - 2.0 * MARGIN;
    let mut pages: Vec<String> = vec![String::new()];
    let mut y = top;

    for block in parse_blocks(text) {
        let (size, lines): (f64, Vec<Line>) = match &block.kind {
            BlockKind::Blank => {
                y -= leading(BODY_SIZE) * block.lines.len() as f64;
                continue;
            }
            BlockKind::Heading(level) => {
                let size = HEADING_SIZES[level - 1];
                let width = (usable / (0.5 * size)).floor() as usize;
                (
                    size,
                    wrap(&block.lines[0], width)
                        .into_iter()
                        .map(|t| Line {
                            size,
                            indent: 0.0,
                            text: t,
                        })
                        .collect(),
                )
            }
            BlockKind::Paragraph | BlockKind::Code => {
                let size = if block.kind == BlockKind::Code {
                    CODE_SIZE
                } else {
                    BODY_SIZE
                };
                let width = (usable / (0.5 * size)).floor() as usize;
                let lines = block
                    .lines
                    .iter()
                    .flat_map(|l| wrap(l, width))
                    .map(|t| Line {
                        size,
                        indent: 0.0,
                        text: t,
                    })
                    .collect();
                (size, lines)
            }
            BlockKind::Bullets => {
                let size = BODY_SIZE;
                let hang = 2.0 * 0.5 * size;
                let width = ((usable - hang) / (0.5 * size)).floor() as usize;
                let mut lines = Vec::new();
                for item in &block.lines {
                    for (i, t) in wrap(item, width).into_iter().enumerate() {
                        let (indent, text) = if i == 0 {
                            (0.0, format!("- {t}"))
                        } else {
                            (hang, t)
                        };
                        lines.push(Line { size, indent, text });
                    }
                }
                (size, lines)
            }
        };
        let lead = leading(size);
        let mut open = false;
        for line in lines {
            if y - lead < MARGIN - 1e-9 {
                if open {
                    pages.last_mut().expect("page").push_str("ET\n");
                    open = false;
                }
                pages.push(String::new());
                y = top;
            }
            y -= lead;
            let page = pages.last_mut().expect("page");
            if !open {
                let _ = writeln!(page, "BT\n/F1 {size} Tf");
                open = true;
            }
            let _ = writeln!(
                page,
                "1 0 0 1 {:.2} {:.2} Tm\n({}) Tj",
                MARGIN + line.indent,
                y + (lead - line.size) / 2.0,
                escape(&line.text)
            );
        }
        if open {
            pages.last_mut().expect("page").push_str("ET\n");
        }
        // A block that ended exactly at the bottom leaves the cursor there;
        // blank lines after it may push y below the margin, so clamp.
        if y < MARGIN {
            y = MARGIN;
        }
    }
    pages
}

/// Renders markdown into a complete PDF file.
pub fn render_markdown_pdf(markdown: &str) -> Vec<u8> {
    let pages = layout(markdown);
    let n = pages.len();
    // Object numbering: 1 catalog, 2 page tree, 3 font, then (page, content)
    // pairs.
    let page_obj = |i: usize| 4 + 2 * i;
    let mut objects: Vec<Vec<u8>> = Vec::new();
    objects.push(b"<< /Type /Catalog /Pages 2 0 R >>".to_vec());
    let kids: Vec<String> = (0..n).map(|i| format!("{} 0 R", page_obj(i))).collect();
    objects.push(format!("<< /Type /Pages /Kids [{}] /Count {n} >>", kids.join(" ")).into_bytes());
    objects.push(
        b"<< /Type /Font /Subtype /Type1 /BaseFont /Courier /Encoding /WinAnsiEncoding >>".to_vec(),
    );
    for (i, content) in pages.iter().enumerate() {
        objects.push(
            format!(
                "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {PAGE_WIDTH} {PAGE_HEIGHT}] /Resources << /Font << /F1 3 0 R >> >> /Contents {} 0 R >>",
                page_obj(i) + 1
            )
            .into_bytes(),
        );
        let mut stream = format!("<< /Length {} >>\nstream\n", content.len()).into_bytes();
        stream.extend_from_slice(content.as_bytes());
        stream.extend_from_slice(b"endstream");
        objects.push(stream);
    }

    let mut out = b"%PDF-1.4\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref_at = out.len();
    let mut xref = format!("xref\n0 {}\n0000000000 65535 f\r\n", objects.len() + 1);
    for off in offsets {
        let _ = write!(xref, "{off:010} 00000 n\r\n");
    }
    let _ = write!(
        xref,
        "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref_at}\n%%EOF",
        objects.len() + 1
    );
    out.extend_from_slice(xref.as_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(b: &[u8]) -> String {
        String::from_utf8_lossy(b).into_owned()
    }

    fn page_count(pdf: &[u8]) -> usize {
        text(pdf).matches("/Type /Page ").count()
    }

    #[test]
    fn empty_document() {
        let pdf = render_markdown_pdf("");
        assert!(pdf.starts_with(b"%PDF-1.4"));
        assert!(pdf.ends_with(b"%%EOF"));
        assert_eq!(page_count(&pdf), 1);
    }

    #[test]
    fn forty_eight_body_lines_per_page() {
        assert_eq!(leading(11.0), 14.0);
        let lines: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
        assert_eq!(page_count(&render_markdown_pdf(&lines.join("\n"))), 5);
        assert_eq!(page_count(&render_markdown_pdf(&lines[..48].join("\n"))), 1);
        assert_eq!(page_count(&render_markdown_pdf(&lines[..49].join("\n"))), 2);
    }

    #[test]
    fn heading_and_paragraph_are_two_text_objects() {
        let pdf = text(&render_markdown_pdf("# Title\nSome body text."));
        assert_eq!(pdf.matches("BT\n").count(), 2);
        assert!(pdf.contains("/F1 20 Tf"));
        assert!(pdf.contains("/F1 11 Tf"));
    }

    #[test]
    fn code_and_bullets() {
        let pdf = text(&render_markdown_pdf(
            "- one\n- two\n```\nfn main() {}\n```\n",
        ));
        assert!(pdf.contains("(- one) Tj"));
        assert!(pdf.contains("/F1 10 Tf"));
        assert!(pdf.contains("(fn main\\(\\) {}) Tj"));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap("aaa bbb ccc", 7), ["aaa bbb", "ccc"]);
        assert_eq!(wrap("abcdefghij", 4), ["abcd", "efgh", "ij"]);
        assert_eq!(wrap("", 4), [""]);
    }

    #[test]
    fn escaping() {
        assert_eq!(escape("a(b)\\c"), "a\\(b\\)\\\\c");
        assert_eq!(escape("é→"), "\\351?");
    }
}
