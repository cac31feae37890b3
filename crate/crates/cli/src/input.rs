//! Reading instances, target lists and start states; error classification.

use std::path::Path;

use covertime::{Error, GridShape, Mdp, TargetSet};
use serde_json::{json, Value};

use crate::InstanceArgs;

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "invalid_argument",
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "io",
            message: message.into(),
        }
    }

    pub fn instance(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "invalid_instance",
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "schema": 1,
            "error": { "kind": self.kind, "code": self.code, "message": self.message },
        })
        .to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::CapExceeded { .. } | Error::StepCapExceeded { .. } | Error::NonConvergence { .. } => Failure {
                code: 3,
                kind: "cap_exceeded",
                message,
            },
            Error::InvalidTargets(_)
            | Error::InvalidPolicy { .. }
            | Error::InvalidParameter(_)
            | Error::InvalidPartition(_)
            | Error::TooManyAgents { .. }
            | Error::EmptyPart
            | Error::SingletonTransfer
            | Error::ConstructionFailed(_) => Failure::usage(message),
            Error::RowSum { .. }
            | Error::Index { .. }
            | Error::Probability { .. }
            | Error::Malformed(_)
            | Error::SingularSystem
            | Error::InfiniteCoverTime { .. }
            | Error::AssumptionViolated
            | Error::NotDeterministic
            | Error::Json(_) => Failure::instance(message),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

pub fn read_instance(path: &Path) -> Result<Mdp, Failure> {
    Ok(Mdp::from_json(&read_text(path)?)?)
}

fn parse_index_list(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Failure::usage(format!("not a state index: {t:?}"))))
        .collect()
}

fn grid_of(mdp: &Mdp) -> Result<GridShape, Failure> {
    mdp.grid()
        .ok_or_else(|| Failure::usage("x,y coordinates need a gridworld instance"))
}

fn parse_xy(token: &str, grid: GridShape) -> Result<usize, Failure> {
    let bad = || Failure::usage(format!("expected x,y but got {token:?}"));
    let (x, y) = token.trim().split_once(',').ok_or_else(bad)?;
    let x: usize = x.trim().parse().map_err(|_| bad())?;
    let y: usize = y.trim().parse().map_err(|_| bad())?;
    if x >= grid.width || y >= grid.height {
        return Err(Failure::usage(format!(
            "cell ({x},{y}) outside the {}x{} grid",
            grid.width, grid.height
        )));
    }
    Ok(grid.state(x, y))
}

/// Targets and an optional start read from `--targets-file`.
fn read_targets_file(path: &Path) -> Result<(Vec<usize>, Option<usize>), Failure> {
    let text = read_text(path)?;
    let trimmed = text.trim();
    if !trimmed.starts_with(['[', '{']) {
        return Ok((parse_index_list(trimmed)?, None));
    }
    let bad = |what: &str| Failure::usage(format!("{}: {what}", path.display()));
    let value: Value = serde_json::from_str(trimmed).map_err(|e| bad(&e.to_string()))?;
    let (list, start) = match &value {
        Value::Array(_) => (&value, None),
        Value::Object(map) => (
            map.get("targets").ok_or_else(|| bad("no `targets` field"))?,
            map.get("start").and_then(Value::as_u64),
        ),
        _ => unreachable!("checked the first character"),
    };
    let targets = serde_json::from_value::<Vec<usize>>(list.clone()).map_err(|e| bad(&e.to_string()))?;
    Ok((targets, start.map(|s| s as usize)))
}

pub struct Mission {
    pub mdp: Mdp,
    pub targets: TargetSet,
    pub start: usize,
    pub instance_id: String,
}

pub fn load_mission(args: &InstanceArgs) -> Result<Mission, Failure> {
    let mdp = read_instance(&args.instance)?;
    let (members, file_start) = if let Some(list) = &args.targets {
        (parse_index_list(list)?, None)
    } else if let Some(pairs) = &args.targets_xy {
        let grid = grid_of(&mdp)?;
        let members = pairs
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_xy(t, grid))
            .collect::<Result<_, _>>()?;
        (members, None)
    } else if let Some(path) = &args.targets_file {
        read_targets_file(path)?
    } else {
        return Err(Failure::usage("no targets given"));
    };
    let start = match (&args.start, &args.start_xy) {
        (Some(s), _) => *s,
        (None, Some(xy)) => parse_xy(xy, grid_of(&mdp)?)?,
        (None, None) => file_start.unwrap_or(0),
    };
    if start >= mdp.n_states() {
        return Err(Failure::usage(format!(
            "start {start} outside the {} states",
            mdp.n_states()
        )));
    }
    let targets = TargetSet::new(members, mdp.n_states())?;
    let instance_id = args
        .instance
        .file_stem()
        .map_or_else(|| "instance".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Mission {
        mdp,
        targets,
        start,
        instance_id,
    })
}

/// `a-b` (inclusive), `a,b,c`, or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::usage(format!("bad seed list {text:?}"));
    if let Some((a, b)) = text.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists_and_seeds() {
        assert_eq!(parse_index_list("1, 2 3,4").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_index_list("1,x").is_err());
        assert_eq!(parse_seeds("3-5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("7,1").unwrap(), vec![7, 1]);
        assert!(parse_seeds("5-3").is_err());
    }

    #[test]
    fn grid_coordinates() {
        let grid = GridShape { width: 4, height: 3 };
        assert_eq!(parse_xy("1,2", grid).unwrap(), 9);
        assert_eq!(parse_xy(" 3 , 0 ", grid).unwrap(), 3);
        assert!(parse_xy("4,0", grid).is_err());
        assert!(parse_xy("1", grid).is_err());
    }

    #[test]
    fn exit_codes_by_error() {
        assert_eq!(Failure::from(Error::StepCapExceeded { steps: 1 }).code, 3);
        assert_eq!(Failure::from(Error::InvalidTargets("x".into())).code, 1);
        assert_eq!(Failure::from(Error::Malformed("x".into())).code, 2);
        let v: Value = serde_json::from_str(&Failure::instance("bad").to_json()).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["error"]["code"], 2);
    }
}
