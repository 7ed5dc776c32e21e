//! Named gate matrices, gate-expression parsing for config files, and
//! builders for commonly used ensembles.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{haar_sample, kron, CMatrix, Limits};
use crate::moment::GateEnsemble;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn mat2(entries: [C64; 4]) -> CMatrix {
    CMatrix::from_vec(2, 2, entries.to_vec()).expect("static 2x2 gate")
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n)
}

pub fn hadamard() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    mat2([c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)])
}

/// diag(1, e^{i theta}).
pub fn phase(theta: f64) -> CMatrix {
    mat2([c(1., 0.), c(0., 0.), c(0., 0.), C64::from_polar(1.0, theta)])
}

pub fn t_gate() -> CMatrix {
    phase(std::f64::consts::FRAC_PI_4)
}

pub fn s_gate() -> CMatrix {
    phase(std::f64::consts::FRAC_PI_2)
}

pub fn pauli_x() -> CMatrix {
    mat2([c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    mat2([c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    mat2([c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Controlled-X with the first (most significant) qubit as control.
pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4).into_array();
    m[[0, 0]] = c(1., 0.);
    m[[1, 1]] = c(1., 0.);
    m[[2, 3]] = c(1., 0.);
    m[[3, 2]] = c(1., 0.);
    CMatrix::from_array_unchecked(m)
}

pub fn cz() -> CMatrix {
    let mut m = CMatrix::identity(4).into_array();
    m[[3, 3]] = c(-1., 0.);
    CMatrix::from_array_unchecked(m)
}

pub fn swap() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4).into_array();
    m[[0, 0]] = c(1., 0.);
    m[[1, 2]] = c(1., 0.);
    m[[2, 1]] = c(1., 0.);
    m[[3, 3]] = c(1., 0.);
    CMatrix::from_array_unchecked(m)
}

/// Looks up a gate by its conventional name.
pub fn named(name: &str) -> Result<CMatrix> {
    match name {
        "I" => Ok(identity(2)),
        "H" => Ok(hadamard()),
        "T" => Ok(t_gate()),
        "S" => Ok(s_gate()),
        "X" => Ok(pauli_x()),
        "Y" => Ok(pauli_y()),
        "Z" => Ok(pauli_z()),
        "CNOT" => Ok(cnot()),
        "CZ" => Ok(cz()),
        "SWAP" => Ok(swap()),
        _ => Err(Error::invalid(format!("unknown gate name '{name}'"))),
    }
}

/// Parses a gate expression.
///
/// Grammar: products `A*B`, `kron(A, B)`, named gates, `I(n)` for an n-dim
/// identity, `phase(theta)` with theta in radians, and `haar(seed)` for a
/// seeded Haar-random unitary. A bare `haar(seed)` takes the expected
/// dimension of the surrounding context; nested uses must pass it
/// explicitly as `haar(seed, dim)`.
pub fn parse_gate(expr: &str, expected_dim: Option<usize>) -> Result<CMatrix> {
    let mut parser = Parser { src: expr.as_bytes(), pos: 0 };
    let ast = parser.parse_expr()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(Error::invalid(format!(
            "trailing input in gate expression '{expr}' at byte {}",
            parser.pos
        )));
    }
    let is_bare_haar = matches!(ast, Ast::Call(ref name, ref args) if name == "haar" && args.len() == 1);
    let out = eval(&ast, if is_bare_haar { expected_dim } else { None })?;
    if let Some(dim) = expected_dim {
        if out.rows() != dim {
            return Err(Error::DimensionMismatch {
                context: "gate expression dimension",
                expected: dim,
                got: out.rows(),
            });
        }
    }
    Ok(out)
}

enum Ast {
    Name(String),
    Call(String, Vec<f64>),
    Product(Box<Ast>, Box<Ast>),
    Kron(Box<Ast>, Box<Ast>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "expected '{}' at byte {} of gate expression",
                ch as char, self.pos
            )))
        }
    }

    fn parse_expr(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_atom()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.parse_atom()?;
            lhs = Ast::Product(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<Ast> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(ch) if ch.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| Error::invalid("gate expression is not valid UTF-8"))?
                    .to_string();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    if name == "kron" {
                        let a = self.parse_expr()?;
                        self.expect(b',')?;
                        let b = self.parse_expr()?;
                        self.expect(b')')?;
                        return Ok(Ast::Kron(Box::new(a), Box::new(b)));
                    }
                    let mut args = Vec::new();
                    loop {
                        match self.peek() {
                            Some(b')') => {
                                self.pos += 1;
                                break;
                            }
                            Some(b',') => {
                                self.pos += 1;
                            }
                            _ => {
                                args.push(self.parse_arg()?);
                            }
                        }
                    }
                    Ok(Ast::Call(name, args))
                } else {
                    Ok(Ast::Name(name))
                }
            }
            other => Err(Error::invalid(format!(
                "unexpected token {:?} at byte {} of gate expression",
                other.map(|b| b as char),
                self.pos
            ))),
        }
    }

    fn parse_arg(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+' || b == b'e' || b == b'E' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(Error::invalid(format!(
                "expected a numeric argument at byte {start} of gate expression"
            )));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse()
            .map_err(|_| Error::invalid(format!("bad numeric argument '{text}'")))
    }
}

fn eval(ast: &Ast, bare_haar_dim: Option<usize>) -> Result<CMatrix> {
    let limits = Limits::default();
    match ast {
        Ast::Name(name) => named(name),
        Ast::Product(a, b) => {
            let left = eval(a, None)?;
            let right = eval(b, None)?;
            left.mul(&right)
        }
        Ast::Kron(a, b) => {
            let left = eval(a, None)?;
            let right = eval(b, None)?;
            kron(&left, &right, &limits)
        }
        Ast::Call(name, args) => match name.as_str() {
            "phase" => match args.as_slice() {
                [theta] => Ok(phase(*theta)),
                _ => Err(Error::invalid("phase() takes one numeric argument")),
            },
            "I" => match args.as_slice() {
                [n] if *n >= 1.0 && n.fract() == 0.0 => Ok(identity(*n as usize)),
                _ => Err(Error::invalid("I() takes one positive integer argument")),
            },
            "haar" => match args.as_slice() {
                [seed] => {
                    let dim = bare_haar_dim.ok_or_else(|| {
                        Error::invalid(
                            "haar(seed) needs a dimension from context; use haar(seed, dim)",
                        )
                    })?;
                    haar_sample(dim, *seed as u64)
                }
                [seed, dim] if *dim >= 1.0 && dim.fract() == 0.0 => {
                    haar_sample(*dim as usize, *seed as u64)
                }
                _ => Err(Error::invalid("haar() takes (seed) or (seed, dim)")),
            },
            other => Err(Error::invalid(format!("unknown gate function '{other}'"))),
        },
    }
}

/// Uniform single-qubit ensemble over the identity, the eighth-phase gate,
/// and the Hadamard gate. Contains a universal gate set together with the
/// identity.
pub fn iht_ensemble() -> GateEnsemble {
    GateEnsemble::uniform(2, vec![identity(2), t_gate(), hadamard()]).expect("static ensemble")
}

/// Uniform single-qubit ensemble over the eighth-phase and Hadamard gates.
/// Universal on its own, but products of adjoint pairs are not.
pub fn th_ensemble() -> GateEnsemble {
    GateEnsemble::uniform(2, vec![t_gate(), hadamard()]).expect("static ensemble")
}

/// Tensor-product ensemble: members `A (x) B` with probabilities `p_a p_b`.
pub fn product_ensemble(a: &GateEnsemble, b: &GateEnsemble) -> Result<GateEnsemble> {
    let limits = Limits::default();
    let dim = a.dim() * b.dim();
    let mut members = Vec::with_capacity(a.members().len() * b.members().len());
    for (pa, ua) in a.members() {
        for (pb, ub) in b.members() {
            members.push((pa * pb, kron(ua, ub, &limits)?));
        }
    }
    GateEnsemble::new(dim, members)
}

/// Seeded random ensemble of `n_members` Haar unitaries with random
/// probabilities. Deterministic under `seed`.
pub fn random_ensemble(dim: usize, n_members: usize, seed: u64) -> Result<GateEnsemble> {
    if n_members == 0 {
        return Err(Error::invalid("random_ensemble: need at least one member"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut probs: Vec<f64> = (0..n_members).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let head: f64 = probs[..n_members - 1].iter().sum();
    probs[n_members - 1] = 1.0 - head;
    let mut members = Vec::with_capacity(n_members);
    for p in probs {
        let gate_seed: u64 = rng.random();
        members.push((p, haar_sample(dim, gate_seed)?));
    }
    GateEnsemble::new(dim, members)
}
