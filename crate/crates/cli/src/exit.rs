use spongedim::Error;

pub const INVALID: u8 = 1;
pub const RESOURCE: u8 = 2;
pub const USAGE: u8 = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }
}

pub fn code_of(e: &Error) -> u8 {
    match e {
        Error::PermutationBudget { .. } | Error::BudgetExceeded { .. } | Error::TypeCap { .. } => {
            RESOURCE
        }
        Error::ScaleOutOfRange(_) | Error::TooFewScales { .. } | Error::Unsupported { .. } => USAGE,
        _ => INVALID,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        let budget = Error::PermutationBudget {
            dimension: 9,
            cap: 8,
        };
        assert_eq!(code_of(&budget), RESOURCE);
        assert_eq!(code_of(&Error::ScaleOutOfRange(2.0)), USAGE);
        assert_eq!(code_of(&Error::Schema("x".into())), INVALID);
    }
}
