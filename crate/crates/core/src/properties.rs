//! Property families: the Jumping World collision family and user-supplied
//! property files.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Direction, GridConfig, OBS_DIM};
use crate::interval::{InputBox, Interval};
use crate::network::Network;
use crate::verifier::{Dnf, OutputAtom, Property};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyFamily {
    pub properties: Vec<Property>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub coverage_note: String,
}

impl PropertyFamily {
    pub fn new(properties: Vec<Property>, coverage_note: impl Into<String>) -> Result<Self> {
        let family = PropertyFamily {
            properties,
            coverage_note: coverage_note.into(),
        };
        family.validate()?;
        Ok(family)
    }

    /// Non-empty, uniquely named, every postcondition has a disjunct.
    pub fn validate(&self) -> Result<()> {
        if self.properties.is_empty() {
            return Err(Error::InvalidProperty {
                name: "<family>".into(),
                reason: "property list is empty".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for p in &self.properties {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::InvalidProperty {
                    name: p.name.clone(),
                    reason: "duplicate property name".into(),
                });
            }
            Property::new(p.name.clone(), p.pre.clone(), p.post.clone())?;
        }
        Ok(())
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        self.properties.iter().try_for_each(|p| p.validate_for(net))
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Property> {
        self.properties.iter()
    }

    /// Copy of the family with the two position dimensions of every
    /// precondition replaced by `x` and `y`.
    pub fn restrict_position(&self, x: Interval, y: Interval) -> Result<Self> {
        let properties = self
            .properties
            .iter()
            .map(|p| {
                if p.pre.dim_count() < 2 {
                    return Err(Error::InvalidProperty {
                        name: p.name.clone(),
                        reason: "no position dimensions".into(),
                    });
                }
                let pre = p.pre.with_dim(0, x).with_dim(1, y);
                Ok(Property {
                    pre,
                    ..p.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(PropertyFamily {
            properties,
            coverage_note: self.coverage_note.clone(),
        })
    }
}

const SENSOR_OFFSET: usize = 2;

/// Dimension of the observation holding the obstacle sensor for `d`.
pub fn sensor_dim(d: Direction) -> usize {
    SENSOR_OFFSET + d.index()
}

/// The 32 collision properties: for each direction with its sensor on and
/// every assignment of the other three sensors, moving that way is unsafe.
pub fn jumping_world_properties(cfg: &GridConfig) -> Result<PropertyFamily> {
    cfg.validate()?;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut properties = Vec::with_capacity(32);
    for d in Direction::ALL {
        let others: Vec<Direction> = Direction::ALL.into_iter().filter(|o| *o != d).collect();
        for bits in 0..8u32 {
            let mut dims = vec![Interval::point(0.0); OBS_DIM];
            dims[0] = Interval::new(-0.5, w - 0.5)?;
            dims[1] = Interval::new(-0.5, h - 0.5)?;
            dims[sensor_dim(d)] = Interval::point(1.0);
            let mut tag = String::new();
            for (k, o) in others.iter().enumerate() {
                let on = (bits >> k) & 1 == 1;
                dims[sensor_dim(*o)] = Interval::point(if on { 1.0 } else { 0.0 });
                tag.push_str(&format!("_{}{}", o.name(), u8::from(on)));
            }
            dims[6] = Interval::new(0.0, w - 1.0)?;
            dims[7] = Interval::new(0.0, h - 1.0)?;
            properties.push(Property::new(
                format!("collide_{}{}", d.name(), tag),
                InputBox::new(dims)?,
                Dnf::atom(OutputAtom::Argmax(d.index())),
            )?);
        }
    }
    PropertyFamily::new(
        properties,
        "moving toward any cell flagged by the obstacle sensors, over every sensor assignment, \
         agent position and target position",
    )
}

/// Reads a property file, reporting parse errors with line and column.
pub fn load_properties(path: impl AsRef<Path>) -> Result<PropertyFamily> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_properties(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_properties(text: &str) -> Result<PropertyFamily> {
    let family: PropertyFamily = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<input>".into(),
        message: e.to_string(),
    })?;
    family.validate()?;
    Ok(family)
}
