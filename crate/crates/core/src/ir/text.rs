//! Canonical line-oriented text form (`.qir-txt`). See `docs/qir-txt.md`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    BodyPath, ClassicalCond, ClbitRef, CondSubject, GateKind, GateOp, Instruction, Program, ProgramMeta, QubitRef, Span,
};
use crate::deadcode::{DeadRegion, PatternKind};

const HEADER: &str = "qir-txt 1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn fmt_angle(a: f64) -> String {
    let fixed = format!("{a:.5}");
    if fixed.parse::<f64>().ok() == Some(a) {
        fixed
    } else {
        format!("{a}")
    }
}

fn list_or_dash(items: &[String]) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join(",")
    }
}

/// Renders `program` in canonical text form. Deterministic.
pub fn serialize(program: &Program) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let m = &program.meta;
    let patterns: Vec<String> = m.patterns.iter().map(|k| k.name().to_string()).collect();
    let _ = writeln!(
        out,
        "meta seed={} n_qubits={} patterns={} passes={}",
        m.seed,
        m.n_qubits,
        list_or_dash(&patterns),
        list_or_dash(&m.passes)
    );
    for w in &program.qregs {
        let _ = writeln!(out, "qreg {w}");
    }
    for w in &program.cregs {
        let _ = writeln!(out, "creg {w}");
    }
    if let Some(r) = program.output {
        let _ = writeln!(out, "output c{r}");
    }
    write_body(&mut out, program, &program.body, &BodyPath::root(), 0);
    out
}

fn write_body(out: &mut String, p: &Program, body: &[Instruction], path: &BodyPath, depth: usize) {
    let indent = "  ".repeat(depth);
    let here: Vec<&DeadRegion> = p.dead_regions.iter().filter(|r| &r.span.body == path).collect();
    for (i, instr) in body.iter().enumerate() {
        let mut starts: Vec<&&DeadRegion> = here.iter().filter(|r| r.span.start == i).collect();
        starts.sort_by(|a, b| b.span.end.cmp(&a.span.end).then(a.id.cmp(&b.id)));
        for r in starts {
            let mut anc: Vec<String> = r.ancilla_qubits.iter().map(|q| q.to_string()).collect();
            anc.extend(r.ancilla_clbits.iter().map(|c| c.to_string()));
            let _ = writeln!(out, "{indent}#dead start {} {} anc={}", r.id, r.kind.name(), list_or_dash(&anc));
        }
        write_instr(out, p, instr, path, i, depth);
        let mut ends: Vec<&&DeadRegion> = here.iter().filter(|r| r.span.end == i + 1).collect();
        ends.sort_by(|a, b| b.span.start.cmp(&a.span.start).then(b.id.cmp(&a.id)));
        for r in ends {
            let _ = writeln!(out, "{indent}#dead end {}", r.id);
        }
    }
}

fn write_instr(out: &mut String, p: &Program, instr: &Instruction, path: &BodyPath, i: usize, depth: usize) {
    let indent = "  ".repeat(depth);
    match instr {
        Instruction::Gate(g) => {
            let _ = writeln!(out, "{indent}{}", gate_text(g));
        }
        Instruction::Measure { qubit, clbit } => {
            let _ = writeln!(out, "{indent}measure {qubit} -> {clbit}");
        }
        Instruction::Reset { qubit } => {
            let _ = writeln!(out, "{indent}reset {qubit}");
        }
        Instruction::IfTest { cond, then_body, else_body } => {
            let _ = writeln!(out, "{indent}if {} == {} {{", cond.subject, cond.value);
            write_body(out, p, then_body, &path.child(i, 0), depth + 1);
            if !else_body.is_empty() {
                let _ = writeln!(out, "{indent}}} else {{");
                write_body(out, p, else_body, &path.child(i, 1), depth + 1);
            }
            let _ = writeln!(out, "{indent}}}");
        }
        Instruction::WhileLoop { cond, body } => {
            let _ = writeln!(out, "{indent}while {} == {} {{", cond.subject, cond.value);
            write_body(out, p, body, &path.child(i, 0), depth + 1);
            let _ = writeln!(out, "{indent}}}");
        }
        Instruction::ForRange { count, body } => {
            let _ = writeln!(out, "{indent}for {count} {{");
            write_body(out, p, body, &path.child(i, 0), depth + 1);
            let _ = writeln!(out, "{indent}}}");
        }
        Instruction::Switch { subject, cases, default } => {
            let _ = writeln!(out, "{indent}switch {subject} {{");
            for (b, (v, body)) in cases.iter().enumerate() {
                let _ = writeln!(out, "{indent}case {v} {{");
                write_body(out, p, body, &path.child(i, b), depth + 1);
                let _ = writeln!(out, "{indent}}}");
            }
            if !default.is_empty() {
                let _ = writeln!(out, "{indent}default {{");
                write_body(out, p, default, &path.child(i, cases.len()), depth + 1);
                let _ = writeln!(out, "{indent}}}");
            }
            let _ = writeln!(out, "{indent}}}");
        }
        Instruction::BreakLoop => {
            let _ = writeln!(out, "{indent}break");
        }
        Instruction::ContinueLoop => {
            let _ = writeln!(out, "{indent}continue");
        }
        Instruction::ControlledOnInt { value, ctrl, body } => {
            let qs: Vec<String> = ctrl.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(out, "{indent}ctrl {value} {} {{", qs.join(" "));
            write_body(out, p, body, &path.child(i, 0), depth + 1);
            let _ = writeln!(out, "{indent}}}");
        }
    }
}

pub(crate) fn gate_text(g: &GateOp) -> String {
    let mut s = g.kind.name().to_string();
    if !g.params.is_empty() {
        let ps: Vec<String> = g.params.iter().map(|a| fmt_angle(*a)).collect();
        let _ = write!(s, "({})", ps.join(","));
    }
    for t in &g.targets {
        let _ = write!(s, " {t}");
    }
    s
}

#[derive(Clone, Copy)]
struct Line<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

impl<'a> Line<'a> {
    /// Tokens with their 1-based columns.
    fn tokens(&self) -> Vec<(usize, &'a str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in self.text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push((self.indent + s + 1, &self.text[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push((self.indent + s + 1, &self.text[s..]));
        }
        out
    }
}

enum End {
    Eof,
    Close,
    CloseElse,
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    qregs: Vec<u32>,
    cregs: Vec<u32>,
    regions: Vec<DeadRegion>,
    last_line: usize,
}

/// Region opened in the current body: id, kind, guard qubits, guard clbits,
/// start index and line.
type OpenRegion = (u32, PatternKind, Vec<QubitRef>, Vec<ClbitRef>, usize, usize);

impl<'a> Parser<'a> {
    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError { line, column, message: message.into() }
    }

    fn peek(&self) -> Option<Line<'a>> {
        self.lines.get(self.pos).copied()
    }

    fn qubit(&self, line: usize, col: usize, tok: &str) -> Result<QubitRef, ParseError> {
        let (reg, off) = parse_indexed(tok, 'q')
            .ok_or_else(|| self.error(line, col, format!("expected qubit reference, found `{tok}`")))?;
        match self.qregs.get(reg as usize) {
            None => Err(self.error(line, col, format!("undeclared quantum register q{reg}"))),
            Some(w) if off >= *w => Err(self.error(line, col, format!("q{reg}[{off}] out of range"))),
            _ => Ok(QubitRef::new(reg, off)),
        }
    }

    fn clbit(&self, line: usize, col: usize, tok: &str) -> Result<ClbitRef, ParseError> {
        let (reg, off) = parse_indexed(tok, 'c')
            .ok_or_else(|| self.error(line, col, format!("expected classical bit reference, found `{tok}`")))?;
        match self.cregs.get(reg as usize) {
            None => Err(self.error(line, col, format!("undeclared classical register c{reg}"))),
            Some(w) if off >= *w => Err(self.error(line, col, format!("c{reg}[{off}] out of range"))),
            _ => Ok(ClbitRef::new(reg, off)),
        }
    }

    fn creg(&self, line: usize, col: usize, tok: &str) -> Result<u32, ParseError> {
        let reg = tok
            .strip_prefix('c')
            .and_then(|r| r.parse::<u32>().ok())
            .ok_or_else(|| self.error(line, col, format!("expected classical register, found `{tok}`")))?;
        if reg as usize >= self.cregs.len() {
            return Err(self.error(line, col, format!("undeclared classical register c{reg}")));
        }
        Ok(reg)
    }

    fn subject(&self, line: usize, col: usize, tok: &str) -> Result<CondSubject, ParseError> {
        if tok.contains('[') {
            Ok(CondSubject::Bit(self.clbit(line, col, tok)?))
        } else {
            Ok(CondSubject::Register(self.creg(line, col, tok)?))
        }
    }

    fn number<T: std::str::FromStr>(&self, line: usize, col: usize, tok: &str) -> Result<T, ParseError> {
        tok.parse().map_err(|_| self.error(line, col, format!("expected a number, found `{tok}`")))
    }

    fn expect_brace(&self, line: usize, toks: &[(usize, &str)], at: usize) -> Result<(), ParseError> {
        match toks.get(at) {
            Some((_, "{")) if toks.len() == at + 1 => Ok(()),
            Some((c, t)) => Err(self.error(line, *c, format!("expected `{{` at end of line, found `{t}`"))),
            None => Err(self.error(line, 1, "expected `{` at end of line")),
        }
    }

    fn header(&mut self) -> Result<ProgramMeta, ParseError> {
        let first = self.peek().ok_or_else(|| self.error(1, 1, "empty input"))?;
        if first.text != HEADER {
            return Err(self.error(first.no, first.indent + 1, format!("expected `{HEADER}`")));
        }
        self.pos += 1;
        let mut meta = ProgramMeta::default();
        while let Some(line) = self.peek() {
            let toks = line.tokens();
            let no = line.no;
            match toks[0].1 {
                "meta" => {
                    for &(col, tok) in &toks[1..] {
                        let (key, val) =
                            tok.split_once('=').ok_or_else(|| self.error(no, col, "expected key=value"))?;
                        match key {
                            "seed" => meta.seed = self.number(no, col, val)?,
                            "n_qubits" => meta.n_qubits = self.number(no, col, val)?,
                            "patterns" if val != "-" => {
                                meta.patterns = val
                                    .split(',')
                                    .map(|k| k.parse::<PatternKind>().map_err(|e| self.error(no, col, e)))
                                    .collect::<Result<_, _>>()?;
                            }
                            "passes" if val != "-" => meta.passes = val.split(',').map(str::to_string).collect(),
                            "patterns" | "passes" => {}
                            _ => return Err(self.error(no, col, format!("unknown meta key `{key}`"))),
                        }
                    }
                }
                "qreg" | "creg" => {
                    let (col, tok) = *toks.get(1).ok_or_else(|| self.error(no, 1, "missing register width"))?;
                    let w: u32 = self.number(no, col, tok)?;
                    if toks[0].1 == "qreg" {
                        self.qregs.push(w);
                    } else {
                        self.cregs.push(w);
                    }
                }
                _ => break,
            }
            self.pos += 1;
        }
        Ok(meta)
    }

    fn body(&mut self, path: &BodyPath) -> Result<(Vec<Instruction>, End), ParseError> {
        let mut body = Vec::new();
        let mut open: Vec<OpenRegion> = Vec::new();
        loop {
            let Some(line) = self.peek() else {
                if let Some((id, .., no)) = open.last() {
                    return Err(self.error(*no, 1, format!("dead region {id} is never closed")));
                }
                return Ok((body, End::Eof));
            };
            let no = line.no;
            let toks = line.tokens();
            let text = line.text;
            self.pos += 1;
            self.last_line = no;
            let end = match text {
                "}" => Some(End::Close),
                "} else {" => Some(End::CloseElse),
                _ => None,
            };
            if let Some(end) = end {
                if let Some((id, .., line)) = open.last() {
                    return Err(self.error(*line, 1, format!("dead region {id} is never closed")));
                }
                return Ok((body, end));
            }
            let (c0, head) = toks[0];
            match head {
                "#dead" => {
                    let kw = toks.get(1).ok_or_else(|| self.error(no, c0, "incomplete dead marker"))?;
                    let (idc, idt) = *toks.get(2).ok_or_else(|| self.error(no, c0, "dead marker needs an id"))?;
                    let id: u32 = self.number(no, idc, idt)?;
                    match kw.1 {
                        "start" => {
                            let (kc, kt) =
                                *toks.get(3).ok_or_else(|| self.error(no, c0, "dead marker needs a kind"))?;
                            let kind = kt.parse::<PatternKind>().map_err(|e| self.error(no, kc, e))?;
                            let (ac, at) =
                                *toks.get(4).ok_or_else(|| self.error(no, c0, "dead marker needs anc=..."))?;
                            let list = at.strip_prefix("anc=").ok_or_else(|| self.error(no, ac, "expected anc=..."))?;
                            let (mut aq, mut acl) = (Vec::new(), Vec::new());
                            if list != "-" {
                                for item in list.split(',') {
                                    if item.starts_with('q') {
                                        aq.push(self.qubit(no, ac, item)?);
                                    } else {
                                        acl.push(self.clbit(no, ac, item)?);
                                    }
                                }
                            }
                            open.push((id, kind, aq, acl, body.len(), no));
                        }
                        "end" => {
                            let Some((oid, kind, aq, acl, start, _)) = open.pop() else {
                                return Err(self.error(no, idc, format!("dead end {id} without matching start")));
                            };
                            if oid != id {
                                return Err(self.error(no, idc, format!("dead end {id} closes region {oid}")));
                            }
                            self.regions.push(DeadRegion {
                                id,
                                kind,
                                span: Span::new(path.clone(), start, body.len()),
                                ancilla_qubits: aq,
                                ancilla_clbits: acl,
                            });
                        }
                        other => return Err(self.error(no, kw.0, format!("unknown dead marker `{other}`"))),
                    }
                }
                "measure" => {
                    if toks.len() != 4 || toks[2].1 != "->" {
                        return Err(self.error(no, c0, "expected `measure <qubit> -> <clbit>`"));
                    }
                    let q = self.qubit(no, toks[1].0, toks[1].1)?;
                    let c = self.clbit(no, toks[3].0, toks[3].1)?;
                    body.push(Instruction::measure(q, c));
                }
                "reset" => {
                    let (c, t) = *toks.get(1).ok_or_else(|| self.error(no, c0, "reset needs a qubit"))?;
                    body.push(Instruction::Reset { qubit: self.qubit(no, c, t)? });
                }
                "break" => body.push(Instruction::BreakLoop),
                "continue" => body.push(Instruction::ContinueLoop),
                "if" | "while" => {
                    if toks.len() != 5 || toks[2].1 != "==" {
                        return Err(self.error(no, c0, format!("expected `{head} <subject> == <value> {{`")));
                    }
                    let subject = self.subject(no, toks[1].0, toks[1].1)?;
                    let value = self.number(no, toks[3].0, toks[3].1)?;
                    self.expect_brace(no, &toks, 4)?;
                    let cond = ClassicalCond { subject, value };
                    let idx = body.len();
                    let (first, end) = self.body(&path.child(idx, 0))?;
                    if head == "while" {
                        self.require_close(no, end, false)?;
                        body.push(Instruction::WhileLoop { cond, body: first });
                    } else {
                        let else_body = match end {
                            End::CloseElse => {
                                let (eb, end2) = self.body(&path.child(idx, 1))?;
                                self.require_close(no, end2, false)?;
                                eb
                            }
                            other => {
                                self.require_close(no, other, true)?;
                                Vec::new()
                            }
                        };
                        body.push(Instruction::IfTest { cond, then_body: first, else_body });
                    }
                }
                "for" => {
                    let (c, t) = *toks.get(1).ok_or_else(|| self.error(no, c0, "for needs a count"))?;
                    let count = self.number(no, c, t)?;
                    self.expect_brace(no, &toks, 2)?;
                    let (b, end) = self.body(&path.child(body.len(), 0))?;
                    self.require_close(no, end, false)?;
                    body.push(Instruction::ForRange { count, body: b });
                }
                "ctrl" => {
                    if toks.len() < 4 {
                        return Err(self.error(no, c0, "expected `ctrl <value> <qubits...> {`"));
                    }
                    let value = self.number(no, toks[1].0, toks[1].1)?;
                    let ctrl = toks[2..toks.len() - 1]
                        .iter()
                        .map(|(c, t)| self.qubit(no, *c, t))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.expect_brace(no, &toks, toks.len() - 1)?;
                    let (b, end) = self.body(&path.child(body.len(), 0))?;
                    self.require_close(no, end, false)?;
                    body.push(Instruction::ControlledOnInt { value, ctrl, body: b });
                }
                "switch" => {
                    let (c, t) = *toks.get(1).ok_or_else(|| self.error(no, c0, "switch needs a subject"))?;
                    let subject = self.subject(no, c, t)?;
                    self.expect_brace(no, &toks, 2)?;
                    let instr = self.switch(no, subject, path, body.len())?;
                    body.push(instr);
                }
                _ => body.push(Instruction::Gate(self.gate(no, &toks)?)),
            }
        }
    }

    fn require_close(&self, opened: usize, end: End, else_ok: bool) -> Result<(), ParseError> {
        match end {
            End::Close => Ok(()),
            End::CloseElse if else_ok => Ok(()),
            End::CloseElse => Err(self.error(self.last_line, 1, "unexpected `} else {`")),
            End::Eof => Err(self.error(opened, 1, "block is never closed")),
        }
    }

    fn switch(
        &mut self,
        opened: usize,
        subject: CondSubject,
        path: &BodyPath,
        idx: usize,
    ) -> Result<Instruction, ParseError> {
        let mut cases = Vec::new();
        let mut default = Vec::new();
        loop {
            let line = self.peek().ok_or_else(|| self.error(opened, 1, "switch is never closed"))?;
            let no = line.no;
            let toks = line.tokens();
            self.pos += 1;
            self.last_line = no;
            match toks[0].1 {
                "}" if toks.len() == 1 => break,
                "case" => {
                    let (c, t) = *toks.get(1).ok_or_else(|| self.error(no, 1, "case needs a value"))?;
                    let v = self.number(no, c, t)?;
                    self.expect_brace(no, &toks, 2)?;
                    let (b, end) = self.body(&path.child(idx, cases.len()))?;
                    self.require_close(no, end, false)?;
                    cases.push((v, b));
                }
                "default" => {
                    self.expect_brace(no, &toks, 1)?;
                    // default is always the last branch
                    let (b, end) = self.body(&path.child(idx, usize::MAX))?;
                    self.require_close(no, end, false)?;
                    default = b;
                }
                other => {
                    return Err(self.error(
                        no,
                        toks[0].0,
                        format!("expected `case`, `default` or `}}`, found `{other}`"),
                    ))
                }
            }
        }
        let n = cases.len();
        let placeholder = path.child(idx, usize::MAX);
        for r in self.regions.iter_mut() {
            let flat = r.span.body.flatten();
            let pre = placeholder.flatten();
            if flat.len() >= pre.len() && flat[..pre.len()] == pre[..] {
                r.span.body.0[placeholder.0.len() - 1].branch = n;
            }
        }
        Ok(Instruction::Switch { subject, cases, default })
    }

    fn gate(&self, no: usize, toks: &[(usize, &str)]) -> Result<GateOp, ParseError> {
        let (c0, head) = toks[0];
        let (name, params) = match head.split_once('(') {
            Some((n, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(|| self.error(no, c0, "unterminated parameter list"))?;
                let ps =
                    inner.split(',').map(|a| self.number::<f64>(no, c0, a.trim())).collect::<Result<Vec<_>, _>>()?;
                (n, ps)
            }
            None => (head, Vec::new()),
        };
        let kind =
            GateKind::from_name(name).ok_or_else(|| self.error(no, c0, format!("unknown instruction `{name}`")))?;
        let targets = toks[1..].iter().map(|(c, t)| self.qubit(no, *c, t)).collect::<Result<Vec<_>, _>>()?;
        Ok(GateOp { kind, params, targets })
    }
}

fn parse_indexed(tok: &str, prefix: char) -> Option<(u32, u32)> {
    let rest = tok.strip_prefix(prefix)?;
    let (reg, off) = rest.split_once('[')?;
    let off = off.strip_suffix(']')?;
    Some((reg.parse().ok()?, off.parse().ok()?))
}

/// Parses the canonical text form. Register references are resolved against
/// the declarations; everything else is left to [`super::validate`].
pub fn deserialize(text: &str) -> Result<Program, ParseError> {
    let lines: Vec<Line> = text
        .lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with("//") {
                return None;
            }
            let indent = raw.len() - raw.trim_start().len();
            Some(Line { no: i + 1, indent, text: trimmed })
        })
        .collect();
    let mut parser = Parser { lines, pos: 0, qregs: Vec::new(), cregs: Vec::new(), regions: Vec::new(), last_line: 1 };
    let meta = parser.header()?;
    let mut output = None;
    if let Some(line) = parser.peek() {
        let toks = line.tokens();
        if toks[0].1 == "output" {
            let no = line.no;
            let (c, t) = *toks.get(1).ok_or_else(|| parser.error(no, 1, "output needs a register"))?;
            output = Some(parser.creg(no, c, t)?);
            parser.pos += 1;
        }
    }
    let (body, end) = parser.body(&BodyPath::root())?;
    if !matches!(end, End::Eof) {
        return Err(parser.error(parser.last_line, 1, "unmatched `}`"));
    }
    let mut program =
        Program { qregs: parser.qregs, cregs: parser.cregs, output, body, dead_regions: parser.regions, meta };
    program.sort_regions();
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3a() -> Program {
        // data q0[0], ancilla q1[0] measured into c1
        let mut p = Program::new(vec![1, 1], vec![1, 1]);
        p.output = Some(0);
        let anc = QubitRef::new(1, 0);
        p.body = vec![
            Instruction::gate(GateKind::X, vec![anc]),
            Instruction::measure(anc, ClbitRef::new(1, 0)),
            Instruction::IfTest {
                cond: ClassicalCond::register_eq(1, 0),
                then_body: vec![Instruction::gate(GateKind::X, vec![QubitRef::new(0, 0)])],
                else_body: vec![Instruction::gate(GateKind::H, vec![QubitRef::new(0, 0)])],
            },
            Instruction::measure(QubitRef::new(0, 0), ClbitRef::new(0, 0)),
        ];
        p.dead_regions = vec![DeadRegion {
            id: 0,
            kind: PatternKind::IfTestDead,
            span: Span::new(BodyPath::root().child(2, 0), 0, 1),
            ancilla_qubits: vec![anc],
            ancilla_clbits: vec![ClbitRef::new(1, 0)],
        }];
        p.meta = ProgramMeta { seed: 3, n_qubits: 1, patterns: vec![PatternKind::IfTestDead], passes: vec![] };
        p
    }

    #[test]
    fn round_trip_if_test_dead() {
        let p = fig3a();
        super::super::validate(&p).unwrap();
        let text = serialize(&p);
        assert!(text.contains("#dead start 0 if_test_dead anc=q1[0],c1[0]"));
        let back = deserialize(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn empty_program_is_three_lines() {
        let p = Program::new(vec![1], vec![]);
        let text = serialize(&p);
        assert_eq!(text, "qir-txt 1\nmeta seed=0 n_qubits=0 patterns=- passes=-\nqreg 1\n");
        assert_eq!(serialize(&p), text);
        assert_eq!(deserialize(&text).unwrap(), p);
    }

    #[test]
    fn undeclared_register_is_a_parse_error() {
        let text = "qir-txt 1\nqreg 1\nh q1[0]\n";
        let e = deserialize(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.column, 3);
        assert!(e.message.contains("undeclared"));
    }

    #[test]
    fn angles_use_five_decimals_when_exact() {
        let g = GateOp::rotation(GateKind::Rzz, 5.86706, vec![QubitRef::new(0, 1), QubitRef::new(0, 2)]);
        assert_eq!(gate_text(&g), "rzz(5.86706) q0[1] q0[2]");
        let g = GateOp::rotation(GateKind::Rz, std::f64::consts::PI, vec![QubitRef::new(0, 0)]);
        assert_eq!(gate_text(&g), "rz(3.141592653589793) q0[0]");
    }

    #[test]
    fn switch_with_default_and_nested_region() {
        let mut p = Program::new(vec![2], vec![2]);
        p.body = vec![Instruction::Switch {
            subject: CondSubject::Register(0),
            cases: vec![(1, vec![Instruction::gate(GateKind::X, vec![QubitRef::new(0, 0)])])],
            default: vec![Instruction::ForRange {
                count: 0,
                body: vec![Instruction::gate(GateKind::Y, vec![QubitRef::new(0, 1)])],
            }],
        }];
        p.dead_regions = vec![DeadRegion {
            id: 4,
            kind: PatternKind::ForZero,
            span: Span::new(BodyPath::root().child(0, 1).child(0, 0), 0, 1),
            ancilla_qubits: vec![],
            ancilla_clbits: vec![],
        }];
        let back = deserialize(&serialize(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn unclosed_block_reports_opening_line() {
        let e = deserialize("qir-txt 1\nqreg 1\nfor 2 {\nh q0[0]\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn mismatched_dead_end() {
        let text =
            "qir-txt 1\nqreg 1\n#dead start 1 for_zero anc=-\n#dead start 2 for_zero anc=-\nh q0[0]\n#dead end 1\n";
        assert!(deserialize(text).is_err());
    }
}
