//! Pauli-sum observables and exact expectation values.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::QuantumError;
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// `coeff * P_0 (x) P_1 (x) ...` where `ops[q]` acts on qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub coeff: f64,
    pub ops: Vec<Pauli>,
}

impl PauliString {
    pub fn new(coeff: f64, ops: Vec<Pauli>) -> Result<Self, QuantumError> {
        if !coeff.is_finite() {
            return Err(QuantumError::InvalidObservable(format!(
                "coefficient {coeff} is not finite"
            )));
        }
        if ops.is_empty() {
            return Err(QuantumError::InvalidObservable("empty Pauli string".into()));
        }
        Ok(Self { coeff, ops })
    }

    /// Parses a label such as `"ZZIX"`; the first character acts on qubit 0.
    pub fn from_label(coeff: f64, label: &str) -> Result<Self, QuantumError> {
        let ops = label
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| QuantumError::InvalidObservable(format!("unknown Pauli {c:?} in {label:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(coeff, ops)
    }

    pub fn num_qubits(&self) -> usize {
        self.ops.len()
    }

    pub fn label(&self) -> String {
        self.ops.iter().map(|p| p.as_char()).collect()
    }

    /// Restriction to the given qubits (in that order) with unit coefficient.
    pub fn restrict(&self, qubits: &[usize]) -> PauliString {
        PauliString {
            coeff: 1.0,
            ops: qubits.iter().map(|&q| self.ops[q]).collect(),
        }
    }

    pub(crate) fn masks(&self) -> (usize, usize, u32) {
        let mut flip = 0usize;
        let mut phase = 0usize;
        let mut ys = 0u32;
        for (q, p) in self.ops.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => flip |= 1 << q,
                Pauli::Z => phase |= 1 << q,
                Pauli::Y => {
                    flip |= 1 << q;
                    phase |= 1 << q;
                    ys += 1;
                }
            }
        }
        (flip, phase, ys)
    }
}

/// Weighted sum of Pauli strings on a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    terms: Vec<PauliString>,
}

impl Observable {
    pub fn new(terms: Vec<PauliString>) -> Result<Self, QuantumError> {
        let Some(first) = terms.first() else {
            return Err(QuantumError::InvalidObservable("no terms".into()));
        };
        let n = first.num_qubits();
        if let Some(t) = terms.iter().find(|t| t.num_qubits() != n) {
            return Err(QuantumError::InvalidObservable(format!(
                "term {} has length {}, expected {n}",
                t.label(),
                t.num_qubits()
            )));
        }
        for t in &terms {
            if !t.coeff.is_finite() {
                return Err(QuantumError::InvalidObservable(format!(
                    "term {} has non-finite coefficient",
                    t.label()
                )));
            }
        }
        Ok(Self { terms })
    }

    /// `Z (x) Z (x) ... (x) Z` on `n` qubits.
    pub fn all_z(num_qubits: usize) -> Self {
        Self {
            terms: vec![PauliString {
                coeff: 1.0,
                ops: vec![Pauli::Z; num_qubits],
            }],
        }
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn num_qubits(&self) -> usize {
        self.terms[0].num_qubits()
    }
}

impl From<PauliString> for Observable {
    fn from(term: PauliString) -> Self {
        Self { terms: vec![term] }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}*{}", t.coeff, t.label())?;
        }
        Ok(())
    }
}

/// Accepts `"ZZZ"`, `"0.5*XZ + -1*YY"` and similar.
impl FromStr for Observable {
    type Err = QuantumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let terms = s
            .split('+')
            .map(|part| {
                let part = part.trim();
                match part.split_once('*') {
                    Some((c, label)) => {
                        let coeff = c
                            .trim()
                            .parse::<f64>()
                            .map_err(|_| QuantumError::InvalidObservable(format!("bad coefficient {c:?}")))?;
                        PauliString::from_label(coeff, label.trim())
                    }
                    None => PauliString::from_label(1.0, part),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Observable::new(terms)
    }
}

/// `<psi|P|psi>` over raw (possibly unnormalised) amplitudes, without `coeff`.
pub(crate) fn pauli_expectation_raw(amps: &[Complex64], term: &PauliString) -> Complex64 {
    let (flip, phase, ys) = term.masks();
    let global = match ys % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, amp) in amps.iter().enumerate() {
        let signed = if (b & phase).count_ones() % 2 == 1 { -*amp } else { *amp };
        acc += amps[b ^ flip].conj() * signed;
    }
    acc * global
}

/// Exact `<psi|O|psi>`.
pub fn expectation(state: &StateVector, observable: &Observable) -> Result<f64, QuantumError> {
    if observable.num_qubits() != state.num_qubits() {
        return Err(QuantumError::DimensionMismatch {
            observable: observable.num_qubits(),
            state: state.num_qubits(),
        });
    }
    let mut total = 0.0;
    for term in observable.terms() {
        let value = pauli_expectation_raw(state.amplitudes(), term);
        debug_assert!(value.im.abs() < 1e-10, "imaginary residue {}", value.im);
        total += term.coeff * value.re;
    }
    Ok(total)
}
