use std::fmt;

use gridfall::error::SimError;

/// Marker attached to errors that map to a specific exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Bad configuration or missing input (exit 2).
    Config,
    /// Too many non-converged sweep scenarios (exit 3).
    Sweep,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config => write!(f, "configuration error"),
            Failure::Sweep => write!(f, "sweep failed"),
        }
    }
}

impl std::error::Error for Failure {}

impl Failure {
    /// 2 for configuration, 3 for sweep and 4 for power-flow divergence.
    pub fn exit_code(err: &anyhow::Error) -> u8 {
        match err.downcast_ref::<Failure>() {
            Some(Failure::Config) => return 2,
            Some(Failure::Sweep) => return 3,
            None => {}
        }
        let diverged = err.downcast_ref::<SimError>().is_some_and(|e| matches!(e, SimError::Diverged { .. }))
            || err.chain().any(|c| matches!(c.downcast_ref::<SimError>(), Some(SimError::Diverged { .. })));
        if diverged {
            4
        } else {
            1
        }
    }
}

/// The error chain on one line, without the exit-code markers and without
/// sources whose text the previous message already contains.
pub fn describe(err: &anyhow::Error) -> String {
    let markers = [Failure::Config.to_string(), Failure::Sweep.to_string()];
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if markers.contains(&text) {
            continue;
        }
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

/// Tag an error as a configuration failure.
pub fn config_err<E>(e: E) -> anyhow::Error
where
    E: std::error::Error + Send + Sync + 'static,
{
    anyhow::Error::new(e).context(Failure::Config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_survive_extra_context() {
        let e = anyhow::anyhow!("bad").context(Failure::Config).context("loading run.json");
        assert_eq!(Failure::exit_code(&e), 2);
        let e = anyhow::anyhow!("3 of 9 failed").context(Failure::Sweep);
        assert_eq!(Failure::exit_code(&e), 3);
        let e = anyhow::Error::new(SimError::Diverged { t_s: 30.0, mismatch: 1.0 }).context("case 2");
        assert_eq!(Failure::exit_code(&e), 4);
        assert_eq!(Failure::exit_code(&anyhow::anyhow!("disk full")), 1);
    }

    #[test]
    fn description_drops_markers() {
        let e = anyhow::anyhow!("window past horizon").context(Failure::Config);
        assert_eq!(describe(&e), "window past horizon");
    }
}
