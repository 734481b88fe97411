use serde::{Deserialize, Serialize};

use super::{TriggerCode, TriggerError};

/// One write to the simulated output register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtlWrite {
    pub byte_value: u8,
    pub write_us: u64,
    pub pulse_width_ms: u32,
    /// The code that produced a non-zero write; `None` for the reset.
    pub code: Option<TriggerCode>,
}

/// In-process stand-in for a parallel-port style trigger line. Each code is
/// mapped to a byte value in order of first use, starting at 1.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TtlRegister {
    pub pulse_width_ms: u32,
    pub log: Vec<TtlWrite>,
    pub codes: Vec<TriggerCode>,
}

impl TtlRegister {
    pub fn new(pulse_width_ms: u32) -> Self {
        Self {
            pulse_width_ms,
            ..Self::default()
        }
    }

    pub fn value_for(&mut self, code: TriggerCode) -> Result<u8, TriggerError> {
        if let Some(i) = self.codes.iter().position(|c| *c == code) {
            return Ok(i as u8 + 1);
        }
        if self.codes.len() == 255 {
            return Err(TriggerError::TtlCodeSpaceExhausted);
        }
        self.codes.push(code);
        Ok(self.codes.len() as u8)
    }

    /// Time at which the line is back at zero.
    pub fn idle_at_us(&self) -> u64 {
        self.log.last().map(|w| w.write_us).unwrap_or(0)
    }

    /// Writes the code's value at `write_us` and the reset one pulse width
    /// later. Callers must not pulse again before `idle_at_us()`.
    pub fn pulse(&mut self, code: TriggerCode, write_us: u64) -> Result<(), TriggerError> {
        let byte_value = self.value_for(code)?;
        let width_us = u64::from(self.pulse_width_ms) * 1000;
        self.log.push(TtlWrite {
            byte_value,
            write_us,
            pulse_width_ms: self.pulse_width_ms,
            code: Some(code),
        });
        self.log.push(TtlWrite {
            byte_value: 0,
            write_us: write_us + width_us,
            pulse_width_ms: self.pulse_width_ms,
            code: None,
        });
        Ok(())
    }

    pub fn pulse_count(&self) -> usize {
        self.log.iter().filter(|w| w.byte_value != 0).count()
    }
}
