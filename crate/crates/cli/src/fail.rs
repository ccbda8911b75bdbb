// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Exit codes: 0 success, 1 domain failure, 2 usage or I/O failure.

use std::process::ExitCode;

#[derive(Debug)]
pub enum Fail {
    /// Bad input data, an invalid model, a rejected action.
    Domain(anyhow::Error),
    /// Bad flags, unreadable files, a locked store.
    Usage(anyhow::Error),
}

impl Fail {
    pub fn code(&self) -> ExitCode {
        match self {
            Fail::Domain(_) => ExitCode::from(1),
            Fail::Usage(_) => ExitCode::from(2),
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Fail::Domain(e) | Fail::Usage(e) => e,
        }
    }
}

pub type Outcome<T = ()> = Result<T, Fail>;

pub trait Classify<T> {
    fn domain(self) -> Outcome<T>;
    fn usage(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn domain(self) -> Outcome<T> {
        self.map_err(|e| Fail::Domain(e.into()))
    }

    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Fail::Usage(e.into()))
    }
}
