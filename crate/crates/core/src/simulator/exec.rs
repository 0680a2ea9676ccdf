//! Tree-walking interpreter shared by the shot sampler and the exact path
//! enumerator. Only the choice of measurement outcomes differs between the two.

use rand::Rng;

use super::statevector::StateVector;
use crate::ir::{CondSubject, GateKind, InstrPath, Instruction, Program};
use crate::rng::StreamRng;

/// Outcome probabilities at or below this are treated as impossible.
pub const PRUNE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Subject {
    offset: usize,
    width: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Gate { kind: GateKind, params: Vec<f64>, qubits: Vec<usize> },
    Measure { qubit: usize, clbit: usize },
    Reset { qubit: usize },
    If { subject: Subject, value: u64, then_ids: Vec<usize>, else_ids: Vec<usize> },
    While { subject: Subject, value: u64, body: Vec<usize> },
    For { count: u64, body: Vec<usize> },
    Switch { subject: Subject, cases: Vec<(u64, Vec<usize>)>, default: Vec<usize> },
    Break,
    Continue,
    Ctrl { value: u64, ctrl: Vec<usize>, body: Vec<usize> },
}

/// Program flattened into an arena indexed by preorder position.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub nodes: Vec<Node>,
    pub paths: Vec<InstrPath>,
    pub top: Vec<usize>,
    pub n_qubits: usize,
    pub n_clbits: usize,
    pub output: Vec<usize>,
}

impl Compiled {
    pub fn new(p: &Program) -> Self {
        let mut c = Compiled {
            nodes: Vec::new(),
            paths: Vec::new(),
            top: Vec::new(),
            n_qubits: p.num_qubits(),
            n_clbits: p.num_clbits(),
            output: p.output_clbits(),
        };
        c.top = c.lower_body(p, &p.body, &[]);
        c
    }

    fn subject(p: &Program, s: &CondSubject) -> Subject {
        match s {
            CondSubject::Bit(b) => Subject { offset: p.clbit_index(*b), width: 1 },
            CondSubject::Register(r) => Subject { offset: p.creg_offset(*r), width: p.cregs[*r as usize] as usize },
        }
    }

    fn lower_body(&mut self, p: &Program, body: &[Instruction], prefix: &[usize]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(body.len());
        for (i, instr) in body.iter().enumerate() {
            let id = self.nodes.len();
            let mut path = prefix.to_vec();
            path.push(i);
            self.nodes.push(Node::Break);
            self.paths.push(InstrPath(path.clone()));
            let child = |c: &mut Self, b: usize, body: &[Instruction]| {
                let mut pre = path.clone();
                pre.push(b);
                c.lower_body(p, body, &pre)
            };
            let node = match instr {
                Instruction::Gate(g) => Node::Gate {
                    kind: g.kind,
                    params: g.params.clone(),
                    qubits: g.targets.iter().map(|q| p.qubit_index(*q)).collect(),
                },
                Instruction::Measure { qubit, clbit } => {
                    Node::Measure { qubit: p.qubit_index(*qubit), clbit: p.clbit_index(*clbit) }
                }
                Instruction::Reset { qubit } => Node::Reset { qubit: p.qubit_index(*qubit) },
                Instruction::IfTest { cond, then_body, else_body } => {
                    let then_ids = child(self, 0, then_body);
                    let else_ids = child(self, 1, else_body);
                    Node::If { subject: Self::subject(p, &cond.subject), value: cond.value, then_ids, else_ids }
                }
                Instruction::WhileLoop { cond, body } => {
                    let body = child(self, 0, body);
                    Node::While { subject: Self::subject(p, &cond.subject), value: cond.value, body }
                }
                Instruction::ForRange { count, body } => Node::For { count: *count, body: child(self, 0, body) },
                Instruction::Switch { subject, cases, default } => {
                    let lowered: Vec<(u64, Vec<usize>)> =
                        cases.iter().enumerate().map(|(b, (v, body))| (*v, child(self, b, body))).collect();
                    let default = child(self, cases.len(), default);
                    Node::Switch { subject: Self::subject(p, subject), cases: lowered, default }
                }
                Instruction::BreakLoop => Node::Break,
                Instruction::ContinueLoop => Node::Continue,
                Instruction::ControlledOnInt { value, ctrl, body } => Node::Ctrl {
                    value: *value,
                    ctrl: ctrl.iter().map(|q| p.qubit_index(*q)).collect(),
                    body: child(self, 0, body),
                },
            };
            self.nodes[id] = node;
            ids.push(id);
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ExecError {
    InfiniteLoop { path: InstrPath, fuel: u64 },
    QubitCap { cap: usize },
    Internal(String),
}

pub(crate) trait Chooser {
    /// Picks an outcome for a measurement whose outcome 1 has probability
    /// `p1` strictly inside `(PRUNE_EPS, 1 - PRUNE_EPS)`.
    fn choose(&mut self, p1: f64) -> Result<bool, ExecError>;
}

pub(crate) struct RngChooser(pub StreamRng);

impl Chooser for RngChooser {
    fn choose(&mut self, p1: f64) -> Result<bool, ExecError> {
        Ok(self.0.gen::<f64>() < p1)
    }
}

/// Replays a fixed prefix of branching decisions, then always takes outcome
/// 0 and records the unexplored outcome-1 branch.
pub(crate) struct PathChooser {
    pub prefix: Vec<bool>,
    pub taken: Vec<bool>,
    pub prob: f64,
    pub pending: Vec<Vec<bool>>,
}

impl PathChooser {
    pub fn new(prefix: Vec<bool>) -> Self {
        Self { prefix, taken: Vec::new(), prob: 1.0, pending: Vec::new() }
    }
}

impl Chooser for PathChooser {
    fn choose(&mut self, p1: f64) -> Result<bool, ExecError> {
        let k = self.taken.len();
        let b = if k < self.prefix.len() {
            self.prefix[k]
        } else {
            let mut alt = self.taken.clone();
            alt.push(true);
            self.pending.push(alt);
            false
        };
        self.taken.push(b);
        self.prob *= if b { p1 } else { 1.0 - p1 };
        Ok(b)
    }
}

enum Flow {
    Normal,
    Break,
    Continue,
}

/// One measurement event: node id, raw probability of outcome 1, outcome.
pub(crate) type MeasureEvent = (usize, f64, bool);

/// Quantum state where untouched and freshly measured qubits are tracked as
/// classical basis states and only the rest live in the statevector.
struct QState {
    sv: StateVector,
    local: Vec<Option<usize>>,
    global: Vec<usize>,
    basis: Vec<bool>,
    cap: usize,
}

impl QState {
    fn new(n: usize, cap: usize) -> Self {
        Self { sv: StateVector::zero(0), local: vec![None; n], global: Vec::new(), basis: vec![false; n], cap }
    }

    fn activate(&mut self, q: usize) -> Result<usize, ExecError> {
        if let Some(l) = self.local[q] {
            return Ok(l);
        }
        if self.global.len() >= self.cap {
            return Err(ExecError::QubitCap { cap: self.cap });
        }
        let l = self.sv.push_qubit(self.basis[q]);
        self.local[q] = Some(l);
        self.global.push(q);
        Ok(l)
    }

    fn deactivate(&mut self, q: usize, bit: bool, prob: f64) {
        let Some(l) = self.local[q].take() else { return };
        self.sv.remove_qubit(l, bit);
        let scale = 1.0 / prob.sqrt();
        self.sv.scale(scale);
        self.global.remove(l);
        for (i, g) in self.global.iter().enumerate().skip(l) {
            self.local[*g] = Some(i);
        }
        self.basis[q] = bit;
    }
}

pub(crate) struct Executor<'a, C: Chooser> {
    prog: &'a Compiled,
    state: QState,
    pub clbits: Vec<bool>,
    pub coverage: Vec<u64>,
    loop_iters: Vec<u64>,
    fuel: u64,
    pub chooser: C,
    pub events: Vec<MeasureEvent>,
    record_events: bool,
}

impl<'a, C: Chooser> Executor<'a, C> {
    pub fn new(prog: &'a Compiled, chooser: C, fuel: u64, qubit_cap: usize, record_events: bool) -> Self {
        Self {
            prog,
            state: QState::new(prog.n_qubits, qubit_cap),
            clbits: vec![false; prog.n_clbits],
            coverage: vec![0; prog.nodes.len()],
            loop_iters: vec![0; prog.nodes.len()],
            fuel,
            chooser,
            events: Vec::new(),
            record_events,
        }
    }

    /// Resets quantum and classical state for another shot, keeping coverage.
    pub fn reset_shot(&mut self) {
        self.state = QState::new(self.prog.n_qubits, self.state.cap);
        self.clbits.iter_mut().for_each(|b| *b = false);
        self.loop_iters.iter_mut().for_each(|c| *c = 0);
        self.events.clear();
    }

    pub fn run_shot(&mut self) -> Result<u64, ExecError> {
        let top = &self.prog.top;
        match self.block(top)? {
            Flow::Normal => {}
            _ => return Err(ExecError::Internal("break/continue escaped the program body".into())),
        }
        Ok(self.output())
    }

    fn output(&self) -> u64 {
        self.prog.output.iter().enumerate().fold(0u64, |acc, (i, &c)| acc | (u64::from(self.clbits[c]) << i))
    }

    fn read(&self, s: Subject) -> u64 {
        (0..s.width).fold(0u64, |acc, i| acc | (u64::from(self.clbits[s.offset + i]) << i))
    }

    fn tick(&mut self, id: usize) -> Result<(), ExecError> {
        self.loop_iters[id] += 1;
        if self.loop_iters[id] > self.fuel {
            return Err(ExecError::InfiniteLoop { path: self.prog.paths[id].clone(), fuel: self.fuel });
        }
        Ok(())
    }

    fn block(&mut self, ids: &[usize]) -> Result<Flow, ExecError> {
        for &id in ids {
            self.coverage[id] += 1;
            match &self.prog.nodes[id] {
                Node::Gate { kind, params, qubits } => self.gate(*kind, params, qubits)?,
                Node::Measure { qubit, clbit } => {
                    let (q, c) = (*qubit, *clbit);
                    let out = self.measure(q, Some(id))?;
                    self.clbits[c] = out;
                }
                Node::Reset { qubit } => {
                    let q = *qubit;
                    self.measure(q, None)?;
                    self.state.basis[q] = false;
                }
                Node::If { subject, value, then_ids, else_ids } => {
                    let branch = if self.read(*subject) == *value { then_ids } else { else_ids };
                    match self.block(branch)? {
                        Flow::Normal => {}
                        f => return Ok(f),
                    }
                }
                Node::While { subject, value, body } => {
                    while self.read(*subject) == *value {
                        self.tick(id)?;
                        if let Flow::Break = self.block(body)? {
                            break;
                        }
                    }
                }
                Node::For { count, body } => {
                    for _ in 0..*count {
                        self.tick(id)?;
                        if let Flow::Break = self.block(body)? {
                            break;
                        }
                    }
                }
                Node::Switch { subject, cases, default } => {
                    let v = self.read(*subject);
                    let branch = cases.iter().find(|(cv, _)| *cv == v).map(|(_, b)| b).unwrap_or(default);
                    match self.block(branch)? {
                        Flow::Normal => {}
                        f => return Ok(f),
                    }
                }
                Node::Break => return Ok(Flow::Break),
                Node::Continue => return Ok(Flow::Continue),
                Node::Ctrl { value, ctrl, body } => self.controlled(*value, ctrl, body)?,
            }
        }
        Ok(Flow::Normal)
    }

    fn measure(&mut self, q: usize, node: Option<usize>) -> Result<bool, ExecError> {
        let Some(l) = self.state.local[q] else {
            let b = self.state.basis[q];
            if let (Some(id), true) = (node, self.record_events) {
                self.events.push((id, if b { 1.0 } else { 0.0 }, b));
            }
            return Ok(b);
        };
        let p1 = self.state.sv.prob_one(l).clamp(0.0, 1.0);
        let out = if p1 <= PRUNE_EPS {
            false
        } else if p1 >= 1.0 - PRUNE_EPS {
            true
        } else {
            self.chooser.choose(p1)?
        };
        if let (Some(id), true) = (node, self.record_events) {
            self.events.push((id, p1, out));
        }
        let prob = if out { p1 } else { 1.0 - p1 };
        self.state.deactivate(q, out, prob);
        Ok(out)
    }

    fn gate(&mut self, kind: GateKind, params: &[f64], qs: &[usize]) -> Result<(), ExecError> {
        let st = &mut self.state;
        let inactive = |st: &QState, q: usize| st.local[q].is_none();
        match kind {
            GateKind::X | GateKind::Y if inactive(st, qs[0]) => {
                st.basis[qs[0]] ^= true;
                return Ok(());
            }
            GateKind::Cx | GateKind::Ccx => {
                let (controls, target) = qs.split_at(qs.len() - 1);
                let mut mask = 0usize;
                for &c in controls {
                    match st.local[c] {
                        None if !st.basis[c] => return Ok(()),
                        None => {}
                        Some(l) => mask |= 1 << l,
                    }
                }
                if mask == 0 {
                    return self.gate(GateKind::X, &[], target);
                }
                let t = st.activate(target[0])?;
                st.sv.apply_controlled(GateKind::X, &[], &[t], mask, mask);
                return Ok(());
            }
            GateKind::Cz => {
                for (a, b) in [(qs[0], qs[1]), (qs[1], qs[0])] {
                    if inactive(st, a) {
                        if st.basis[a] {
                            return self.gate(GateKind::Z, &[], &[b]);
                        }
                        return Ok(());
                    }
                }
            }
            GateKind::Swap if qs.iter().all(|q| inactive(st, *q)) => {
                st.basis.swap(qs[0], qs[1]);
                return Ok(());
            }
            k if k.is_diagonal() && qs.iter().all(|q| inactive(st, *q)) => return Ok(()),
            _ => {}
        }
        let mut locals = Vec::with_capacity(qs.len());
        for &q in qs {
            locals.push(st.activate(q)?);
        }
        st.sv.apply(kind, params, &locals);
        Ok(())
    }

    fn controlled(&mut self, value: u64, ctrl: &[usize], body: &[usize]) -> Result<(), ExecError> {
        let mut active = Vec::new();
        for (k, &c) in ctrl.iter().enumerate() {
            let want = (value >> k) & 1 == 1;
            match self.state.local[c] {
                None if self.state.basis[c] != want => return Ok(()),
                None => {}
                Some(_) => active.push((c, want)),
            }
        }
        if active.is_empty() {
            return match self.block(body)? {
                Flow::Normal => Ok(()),
                _ => Err(ExecError::Internal("loop control inside controlled body".into())),
            };
        }
        for &id in body {
            if let Node::Gate { qubits, .. } = &self.prog.nodes[id] {
                for &q in qubits {
                    self.state.activate(q)?;
                }
            }
        }
        let (mut mask, mut val) = (0usize, 0usize);
        for (c, want) in active {
            let l = self.state.local[c].expect("active control");
            mask |= 1 << l;
            if want {
                val |= 1 << l;
            }
        }
        for &id in body {
            self.coverage[id] += 1;
            let Node::Gate { kind, params, qubits } = &self.prog.nodes[id] else {
                return Err(ExecError::Internal("non-gate inside controlled body".into()));
            };
            let locals: Vec<usize> = qubits.iter().map(|q| self.state.local[*q].expect("activated")).collect();
            self.state.sv.apply_controlled(*kind, params, &locals, mask, val);
        }
        Ok(())
    }
}
