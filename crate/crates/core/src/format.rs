//! File-format versioning shared by every on-disk document.

use thiserror::Error;

/// Version stamped into every JSON document this crate writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported format version {found} (this build reads version {FORMAT_VERSION})")]
pub struct FormatVersionError {
    pub found: u32,
}

/// Rejects documents written by an unknown format revision.
pub fn check_format_version(found: u32) -> Result<(), FormatVersionError> {
    if found == FORMAT_VERSION {
        Ok(())
    } else {
        Err(FormatVersionError { found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_versions() {
        assert!(check_format_version(FORMAT_VERSION).is_ok());
        assert_eq!(
            check_format_version(99),
            Err(FormatVersionError { found: 99 })
        );
    }
}
