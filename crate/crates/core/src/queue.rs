//! Finite transmit buffer fed by ON/OFF Markov arrivals.
//!
//! Bits stay in the buffer until their packet is ACKed; a NAK leaves them at
//! the head for the next transmission. Overflow drops the excess of an
//! arrival (drop-tail).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalProcess {
    pub on: bool,
    pub self_transition: f64,
    pub packet_bits: u64,
}

impl ArrivalProcess {
    pub fn new(on: bool, self_transition: f64, packet_bits: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&self_transition) {
            return Err(Error::config("self_transition", "must lie in [0, 1]"));
        }
        Ok(Self {
            on,
            self_transition,
            packet_bits,
        })
    }

    /// Advances the ON/OFF state with uniform `u` and returns the bits that
    /// arrive in the new state.
    pub fn step(&mut self, u: f64) -> u64 {
        if u >= self.self_transition {
            self.on = !self.on;
        }
        if self.on {
            self.packet_bits
        } else {
            0
        }
    }
}

/// Functional form of [`ArrivalProcess::step`].
pub fn arrival_step(mut process: ArrivalProcess, u: f64) -> (ArrivalProcess, u64) {
    let bits = process.step(u);
    (process, bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferState {
    pub occupancy: u64,
    pub capacity: u64,
    /// Bits sent but not yet ACKed or NAKed; always part of `occupancy`.
    pub in_flight: u64,
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    initial: u64,
}

impl BufferState {
    pub fn new(capacity: u64, initial: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer_packets", "capacity must be positive"));
        }
        if initial > capacity {
            return Err(Error::config("buffer_packets", "initial fill exceeds capacity"));
        }
        Ok(Self {
            occupancy: initial,
            capacity,
            in_flight: 0,
            arrived: 0,
            served: 0,
            dropped: 0,
            initial,
        })
    }

    pub fn initial(&self) -> u64 {
        self.initial
    }

    /// Releases `acked` in-flight bits, then admits `arrived` bits, dropping
    /// whatever does not fit.
    pub fn step(&mut self, arrived: u64, acked: u64) -> Result<()> {
        if acked > self.in_flight {
            return Err(Error::Domain(format!(
                "{acked} bits acknowledged but only {} in flight",
                self.in_flight
            )));
        }
        self.in_flight -= acked;
        self.occupancy -= acked;
        self.served += acked;
        let admitted = arrived.min(self.capacity - self.occupancy);
        self.occupancy += admitted;
        self.arrived += arrived;
        self.dropped += arrived - admitted;
        Ok(())
    }

    /// NAKed bits leave flight but stay queued.
    pub fn retain(&mut self, bits: u64) -> Result<()> {
        if bits > self.in_flight {
            return Err(Error::Domain(format!("{bits} bits NAKed but only {} in flight", self.in_flight)));
        }
        self.in_flight -= bits;
        Ok(())
    }

    /// Payload of the next packet, moved into flight.
    pub fn transmit(&mut self, rate_bits: u64) -> u64 {
        let bits = transmit_size(self, rate_bits);
        self.in_flight += bits;
        bits
    }

    /// `arrived = served + dropped + (occupancy - initial)`.
    pub fn conserves(&self) -> bool {
        self.arrived + self.initial == self.served + self.dropped + self.occupancy
    }
}

/// Functional form of [`BufferState::step`].
pub fn buffer_step(mut buffer: BufferState, arrived: u64, acked: u64) -> Result<BufferState> {
    buffer.step(arrived, acked)?;
    Ok(buffer)
}

/// Bits the next packet can carry: queued bits not already in flight, up to
/// the rate.
pub fn transmit_size(buffer: &BufferState, rate_bits: u64) -> u64 {
    (buffer.occupancy - buffer.in_flight).min(rate_bits)
}
