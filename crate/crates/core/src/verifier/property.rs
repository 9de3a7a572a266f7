use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{InputBox, LinearForm};
use crate::network::{argmax_unchecked, dot, Network};

/// One output constraint. `Linear` means `c . y >= b` (`> b` when strict);
/// `Argmax(j)` means output `j` is the selected action under lowest-index
/// tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAtom {
    Linear {
        c: Vec<f64>,
        b: f64,
        #[serde(default)]
        strict: bool,
    },
    Argmax(usize),
}

impl OutputAtom {
    pub fn ge(c: Vec<f64>, b: f64) -> Self {
        OutputAtom::Linear { c, b, strict: false }
    }

    pub fn gt(c: Vec<f64>, b: f64) -> Self {
        OutputAtom::Linear { c, b, strict: true }
    }

    pub fn holds(&self, y: &[f64]) -> bool {
        match self {
            OutputAtom::Linear { c, b, strict } => {
                let v = dot(c, y);
                if *strict {
                    v > *b
                } else {
                    v >= *b
                }
            }
            OutputAtom::Argmax(j) => argmax_unchecked(y) == *j,
        }
    }

    fn check(&self, outputs: usize) -> std::result::Result<(), String> {
        match self {
            OutputAtom::Linear { c, b, .. } => {
                if c.len() != outputs {
                    return Err(format!(
                        "linear atom has {} coefficients but the network has {outputs} outputs",
                        c.len()
                    ));
                }
                if c.iter().any(|v| !v.is_finite()) || !b.is_finite() {
                    return Err("linear atom has non-finite coefficients".into());
                }
                Ok(())
            }
            OutputAtom::Argmax(j) if *j >= outputs => Err(format!(
                "argmax index {j} out of range for {outputs} outputs"
            )),
            OutputAtom::Argmax(_) => Ok(()),
        }
    }
}

/// Postcondition in disjunctive normal form: a disjunction of conjunctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dnf(pub Vec<Vec<OutputAtom>>);

impl Dnf {
    pub fn atom(atom: OutputAtom) -> Self {
        Dnf(vec![vec![atom]])
    }

    pub fn holds(&self, y: &[f64]) -> bool {
        self.0.iter().any(|conj| conj.iter().all(|a| a.holds(y)))
    }

    pub fn validate(&self, outputs: usize) -> std::result::Result<(), String> {
        if self.0.is_empty() {
            return Err("postcondition has no disjuncts".into());
        }
        for conj in &self.0 {
            if conj.is_empty() {
                return Err("postcondition has an empty conjunction".into());
            }
            for atom in conj {
                atom.check(outputs)?;
            }
        }
        Ok(())
    }
}

/// A verification query: input precondition box and the unsafe event `post`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub pre: InputBox,
    pub post: Dnf,
}

impl Property {
    pub fn new(name: impl Into<String>, pre: InputBox, post: Dnf) -> Result<Self> {
        let p = Property {
            name: name.into(),
            pre,
            post,
        };
        if p.post.0.is_empty() {
            return Err(p.invalid("postcondition has no disjuncts"));
        }
        Ok(p)
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidProperty {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Checks the property against a network's input and output shape.
    pub fn validate_for(&self, net: &Network) -> Result<()> {
        if self.pre.dim_count() != net.input_dim() {
            return Err(self.invalid(format!(
                "precondition has {} dimensions but the network takes {} inputs",
                self.pre.dim_count(),
                net.input_dim()
            )));
        }
        self.post
            .validate(net.output_dim())
            .map_err(|r| self.invalid(r))
    }

    /// True when `x` lies in the precondition and the network output at `x`
    /// concretely satisfies the postcondition.
    pub fn is_witness(&self, net: &Network, x: &[f64]) -> bool {
        if !self.pre.contains(x) {
            return false;
        }
        match net.forward(x) {
            Ok(y) => self.post.holds(&y),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum CompiledAtom {
    Linear { form: LinearForm, strict: bool },
    /// Forms for `y_j - y_k`, one per `k != j`.
    Argmax { diffs: Vec<LinearForm> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Truth {
    True,
    False,
    Unknown,
}

/// Postcondition folded into the network's final layer.
#[derive(Debug, Clone)]
pub(crate) struct CompiledPost {
    disjuncts: Vec<Vec<CompiledAtom>>,
}

impl CompiledPost {
    pub fn new(net: &Network, post: &Dnf) -> Result<Self> {
        let outputs = net.output_dim();
        post.validate(outputs)
            .map_err(|r| Error::Contract(format!("postcondition: {r}")))?;
        let disjuncts = post
            .0
            .iter()
            .map(|conj| {
                conj.iter()
                    .map(|atom| compile_atom(net, atom, outputs))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPost { disjuncts })
    }

    /// Three-valued evaluation from bounds on the final layer's input.
    pub fn classify(&self, lo: &[f64], hi: &[f64]) -> super::BoxClass {
        let mut all_false = true;
        for conj in &self.disjuncts {
            let mut conj_truth = Truth::True;
            for atom in conj {
                match atom_truth(atom, lo, hi) {
                    Truth::False => {
                        conj_truth = Truth::False;
                        break;
                    }
                    Truth::Unknown => conj_truth = Truth::Unknown,
                    Truth::True => {}
                }
            }
            match conj_truth {
                Truth::True => return super::BoxClass::Violating,
                Truth::Unknown => all_false = false,
                Truth::False => {}
            }
        }
        if all_false {
            super::BoxClass::Safe
        } else {
            super::BoxClass::Unknown
        }
    }
}

fn compile_atom(net: &Network, atom: &OutputAtom, outputs: usize) -> Result<CompiledAtom> {
    Ok(match atom {
        OutputAtom::Linear { c, b, strict } => CompiledAtom::Linear {
            form: LinearForm::fold(net, c, *b)?,
            strict: *strict,
        },
        OutputAtom::Argmax(j) => {
            let diffs = (0..outputs)
                .filter(|k| k != j)
                .map(|k| {
                    let mut c = vec![0.0; outputs];
                    c[*j] = 1.0;
                    c[k] = -1.0;
                    LinearForm::fold(net, &c, 0.0)
                })
                .collect::<Result<Vec<_>>>()?;
            CompiledAtom::Argmax { diffs }
        }
    })
}

#[inline]
fn atom_truth(atom: &CompiledAtom, lo: &[f64], hi: &[f64]) -> Truth {
    match atom {
        CompiledAtom::Linear { form, strict } => {
            let (l, u) = form.bounds(lo, hi);
            let proven = if *strict { l > 0.0 } else { l >= 0.0 };
            if proven {
                Truth::True
            } else if u < 0.0 {
                Truth::False
            } else {
                Truth::Unknown
            }
        }
        CompiledAtom::Argmax { diffs } => {
            let mut proven = true;
            for form in diffs {
                let (l, u) = form.bounds(lo, hi);
                // some y_k provably exceeds y_j
                if u < 0.0 {
                    return Truth::False;
                }
                if l <= 0.0 {
                    proven = false;
                }
            }
            if proven {
                Truth::True
            } else {
                Truth::Unknown
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concrete_atoms() {
        assert!(OutputAtom::ge(vec![1.0], 10.0).holds(&[10.0]));
        assert!(!OutputAtom::gt(vec![1.0], 10.0).holds(&[10.0]));
        assert!(OutputAtom::Argmax(0).holds(&[0.5, 0.5]));
        assert!(!OutputAtom::Argmax(1).holds(&[0.5, 0.5]));
        let dnf = Dnf(vec![
            vec![OutputAtom::Argmax(1), OutputAtom::ge(vec![1.0, 0.0], 5.0)],
            vec![OutputAtom::ge(vec![0.0, 1.0], 3.0)],
        ]);
        assert!(dnf.holds(&[0.0, 3.0]));
        assert!(!dnf.holds(&[0.0, 2.0]));
        assert!(dnf.holds(&[6.0, 7.0]));
    }

    #[test]
    fn dnf_validation() {
        assert!(Dnf(vec![]).validate(2).is_err());
        assert!(Dnf(vec![vec![]]).validate(2).is_err());
        assert!(Dnf::atom(OutputAtom::Argmax(2)).validate(2).is_err());
        assert!(Dnf::atom(OutputAtom::ge(vec![1.0], 0.0)).validate(2).is_err());
        assert!(Dnf::atom(OutputAtom::ge(vec![1.0, 1.0], 0.0)).validate(2).is_ok());
    }

    #[test]
    fn atom_serialization_shape() {
        let json = serde_json::to_string(&OutputAtom::Argmax(3)).unwrap();
        assert_eq!(json, r#"{"argmax":3}"#);
        let atom: OutputAtom =
            serde_json::from_str(r#"{"linear":{"c":[1.0],"b":10.0,"strict":false}}"#).unwrap();
        assert_eq!(atom, OutputAtom::ge(vec![1.0], 10.0));
    }
}
