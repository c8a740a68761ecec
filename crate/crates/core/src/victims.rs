//! Victim programs as abstract instruction streams framed by boundary pages.
//!
//! Page 1 is the opening marker (the trace starts right after its fault) and
//! page 2 the closing marker. Code lives on page 0.

use crate::enclave::{Block, Guard, InstructionSpec, Opcode, SecretBinding, SecretDomain, VictimProgram};
use crate::error::{Error, Result};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

pub const CODE_PAGE: u32 = 0;
pub const START_PAGE: u32 = 1;
pub const STOP_PAGE: u32 = 2;

fn ins(op: Opcode) -> InstructionSpec {
    InstructionSpec::new(op, CODE_PAGE)
}

fn block(label: &str, guard: Guard, ops: &[Opcode]) -> Block {
    Block {
        label: label.into(),
        guard,
        instructions: ops.iter().map(|o| ins(*o)).collect(),
    }
}

fn stop_block() -> Block {
    Block {
        label: "stop_marker".into(),
        guard: Guard::Always,
        instructions: vec![InstructionSpec::new(Opcode::Marker, STOP_PAGE)],
    }
}

fn program(name: &str, blocks: Vec<Block>, env: &[(&str, u64, u64)]) -> VictimProgram {
    VictimProgram {
        name: name.into(),
        blocks,
        boundary_pages: [START_PAGE, STOP_PAGE].into_iter().collect(),
        secret_env: env
            .iter()
            .map(|(n, lo, hi)| (n.to_string(), SecretDomain { min: *lo, max: *hi }))
            .collect(),
    }
}

pub fn binding(pairs: &[(&str, u64)]) -> SecretBinding {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filler {
    Nop,
    Addl,
    /// Rotating compute and memory instructions.
    Mixed,
}

impl Filler {
    pub fn opcode_at(self, i: usize) -> Opcode {
        match self {
            Filler::Nop => Opcode::Nop,
            Filler::Addl => Opcode::Addl,
            Filler::Mixed => [Opcode::Load, Opcode::Alu, Opcode::Cmp, Opcode::Jcc, Opcode::Nop, Opcode::Inc][i % 6],
        }
    }

    pub fn ops(self, n: usize) -> Vec<Opcode> {
        (0..n).map(|i| self.opcode_at(i)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Filler::Nop => "nop",
            Filler::Addl => "addl",
            Filler::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Filler> {
        match s {
            "nop" => Some(Filler::Nop),
            "addl" => Some(Filler::Addl),
            "mixed" => Some(Filler::Mixed),
            _ => None,
        }
    }
}

/// Straight-line region of `length` filler instructions.
pub fn make_region_victim(filler: Filler, length: usize) -> VictimProgram {
    program(
        &format!("region_{length}"),
        vec![block("region", Guard::Always, &filler.ops(length)), stop_block()],
        &[],
    )
}

// Return from the start-marker write, reload of `s` and the guess, compare.
const DELTA_HEAD: [Opcode; 6] = [Opcode::Ret, Opcode::Load, Opcode::Load, Opcode::Load, Opcode::Cmp, Opcode::Jcc];
// Argument setup and call into the stop-marker write.
const DELTA_TAIL: [Opcode; 4] = [Opcode::Alu, Opcode::Alu, Opcode::Call, Opcode::Load];

/// Branch on a static secret: the long side is taken iff `s != guess`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaBranchVictim {
    pub delta: usize,
    pub base_length: usize,
    pub filler: Filler,
    pub guess: u64,
}

impl DeltaBranchVictim {
    pub fn new(delta: usize, guess: u64, filler: Filler) -> Self {
        DeltaBranchVictim {
            delta,
            base_length: 10,
            filler,
            guess,
        }
    }

    pub fn program(&self) -> VictimProgram {
        let g = self.guess;
        program(
            &format!("delta_branch_{}", self.delta),
            vec![
                block("compare", Guard::Always, &DELTA_HEAD),
                block("short", Guard::Eq("s".into(), g), &self.filler.ops(self.base_length)),
                block(
                    "long",
                    Guard::Ne("s".into(), g),
                    &self.filler.ops(self.base_length + self.delta),
                ),
                block("call_stop", Guard::Always, &DELTA_TAIL),
                stop_block(),
            ],
            &[("s", 0, 1)],
        )
    }

    pub fn binding(&self, s: u64) -> SecretBinding {
        binding(&[("s", s)])
    }

    /// Length of the taken side of the branch.
    pub fn path_length(&self, s: u64) -> usize {
        self.base_length + if s != self.guess { self.delta } else { 0 }
    }

    /// Retired instructions between the markers.
    pub fn retired_count(&self, s: u64) -> usize {
        DELTA_HEAD.len() + self.path_length(s) + DELTA_TAIL.len()
    }
}

pub const MEMCMP_MAX_LEN: usize = 8;
const MEMCMP_HEAD: [Opcode; 4] = [Opcode::Load, Opcode::Load, Opcode::Cmp, Opcode::Jcc];
// `i++` on a stack slot is a memory-destination add.
const MEMCMP_TAIL: [Opcode; 2] = [Opcode::Addl, Opcode::Test];
const MEMCMP_LENGTH: [Opcode; 4] = [Opcode::Load, Opcode::Load, Opcode::Cmp, Opcode::Jcc];
const MEMCMP_EXIT: [Opcode; 2] = [Opcode::Alu, Opcode::Ret];

/// Early-exit byte comparison against a hidden uppercase string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemcmpVictim {
    secret: Vec<u8>,
}

impl MemcmpVictim {
    pub fn new(secret: &str) -> Result<Self> {
        validate_memcmp_string(secret)?;
        Ok(MemcmpVictim {
            secret: secret.as_bytes().to_vec(),
        })
    }

    pub fn secret_len(&self) -> usize {
        self.secret.len()
    }

    /// Program shape for an attacker input (its length is attacker-known).
    pub fn program(input_len: usize) -> VictimProgram {
        let l = input_len as u64;
        let mut blocks = vec![block("length_check", Guard::Always, &MEMCMP_LENGTH)];
        for i in 0..input_len as u64 {
            blocks.push(block(
                &format!("compare_{i}"),
                Guard::All(vec![Guard::Eq("len_eq".into(), 1), Guard::Ge("prefix".into(), i)]),
                &MEMCMP_HEAD,
            ));
            blocks.push(block(
                &format!("advance_{i}"),
                Guard::All(vec![Guard::Eq("len_eq".into(), 1), Guard::Ge("prefix".into(), i + 1)]),
                &MEMCMP_TAIL,
            ));
        }
        blocks.push(block("exit_length", Guard::Eq("len_eq".into(), 0), &MEMCMP_EXIT));
        blocks.push(block(
            "exit_mismatch",
            Guard::All(vec![Guard::Eq("len_eq".into(), 1), Guard::Lt("prefix".into(), l)]),
            &MEMCMP_EXIT,
        ));
        blocks.push(block(
            "exit_match",
            Guard::All(vec![Guard::Eq("len_eq".into(), 1), Guard::Ge("prefix".into(), l)]),
            &MEMCMP_EXIT,
        ));
        blocks.push(stop_block());
        program(
            &format!("memcmp_{input_len}"),
            blocks,
            &[("len_eq", 0, 1), ("prefix", 0, l)],
        )
    }

    pub fn binding(&self, input: &str) -> Result<SecretBinding> {
        validate_memcmp_string(input)?;
        let (len_eq, prefix) = self.compare(input.as_bytes());
        Ok(binding(&[("len_eq", len_eq as u64), ("prefix", prefix as u64)]))
    }

    fn compare(&self, input: &[u8]) -> (bool, usize) {
        let len_eq = input.len() == self.secret.len();
        let prefix = if len_eq {
            input.iter().zip(&self.secret).take_while(|(a, b)| a == b).count()
        } else {
            0
        };
        (len_eq, prefix)
    }

    /// Compare blocks entered: min(matching prefix + 1, length) when lengths agree.
    pub fn compare_blocks(&self, input: &str) -> usize {
        let (len_eq, p) = self.compare(input.as_bytes());
        if len_eq {
            (p + 1).min(input.len())
        } else {
            0
        }
    }

    pub fn retired_count(&self, input: &str) -> usize {
        let (len_eq, p) = self.compare(input.as_bytes());
        let body = if len_eq {
            MEMCMP_HEAD.len() * (p + 1).min(input.len()) + MEMCMP_TAIL.len() * p
        } else {
            0
        };
        MEMCMP_LENGTH.len() + body + MEMCMP_EXIT.len()
    }
}

pub fn validate_memcmp_string(s: &str) -> Result<()> {
    if s.is_empty() || s.len() > MEMCMP_MAX_LEN || !s.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(Error::Config(format!(
            "memcmp strings must be 1-{MEMCMP_MAX_LEN} characters from A-Z, got {s:?}"
        )));
    }
    Ok(())
}

pub const TRUNCATION_EXTRA: usize = 52;
pub const NONCE_BITS: u64 = 160;

fn truncation_common() -> Vec<Opcode> {
    let mut ops = Vec::new();
    for _ in 0..12 {
        ops.extend_from_slice(&[Opcode::Load, Opcode::Alu, Opcode::Alu, Opcode::Jcc]);
    }
    ops
}

/// Nonce-truncation loop: a second iteration of 52 memory-bound instructions
/// runs when the top `width` bits of the nonce are all ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationVictim {
    pub width: u32,
}

impl Default for TruncationVictim {
    fn default() -> Self {
        TruncationVictim { width: 15 }
    }
}

impl TruncationVictim {
    pub fn program(&self) -> VictimProgram {
        program(
            "nonce_truncation",
            vec![
                block("first_iteration", Guard::Always, &truncation_common()),
                block(
                    "second_iteration",
                    Guard::Eq("biased".into(), 1),
                    &[Opcode::Addl; TRUNCATION_EXTRA],
                ),
                block("return", Guard::Always, &[Opcode::Alu, Opcode::Ret]),
                stop_block(),
            ],
            &[("biased", 0, 1)],
        )
    }

    pub fn is_biased(&self, nonce: &BigUint) -> bool {
        msb_ones(nonce, self.width)
    }

    pub fn binding(&self, nonce: &BigUint) -> SecretBinding {
        binding(&[("biased", self.is_biased(nonce) as u64)])
    }
}

/// Top `width` bits of a 160-bit value are all ones.
pub fn msb_ones(nonce: &BigUint, width: u32) -> bool {
    if width == 0 {
        return true;
    }
    if nonce.bits() > NONCE_BITS {
        return false;
    }
    let top = nonce >> (NONCE_BITS - width as u64);
    top == (BigUint::from(1u8) << width) - 1u8
}

pub fn leading_zeros(nonce: &BigUint) -> u64 {
    NONCE_BITS.saturating_sub(nonce.bits())
}

/// Call-site gadget before the `mp_copy` boundary: two extra instructions run
/// when the nonce has at least `min_zeros` leading zero bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LzbVictim {
    pub min_zeros: u64,
}

impl Default for LzbVictim {
    fn default() -> Self {
        LzbVictim { min_zeros: 5 }
    }
}

pub const LZB_SHORT: usize = 12;
pub const LZB_LONG: usize = 14;

impl LzbVictim {
    pub fn program(&self) -> VictimProgram {
        let prefix = [
            Opcode::Load,
            Opcode::Alu,
            Opcode::Cmp,
            Opcode::Jcc,
            Opcode::Alu,
            Opcode::Load,
            Opcode::Test,
            Opcode::Jcc,
            Opcode::Alu,
            Opcode::Alu,
            Opcode::Alu,
        ];
        program(
            "lzb_gadget",
            vec![
                block("prefix", Guard::Always, &prefix),
                block("zero_skip", Guard::Eq("lzb".into(), 1), &[Opcode::Alu, Opcode::Jcc]),
                block("call_mp_copy", Guard::Always, &[Opcode::Call]),
                stop_block(),
            ],
            &[("lzb", 0, 1)],
        )
    }

    pub fn is_biased(&self, nonce: &BigUint) -> bool {
        leading_zeros(nonce) >= self.min_zeros
    }

    pub fn binding(&self, nonce: &BigUint) -> SecretBinding {
        binding(&[("lzb", self.is_biased(nonce) as u64)])
    }
}

/// All victims as a tagged descriptor, for manifests and replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VictimDescriptor {
    Region { filler: Filler, length: usize },
    DeltaBranch(DeltaBranchVictim),
    Memcmp { input_len: usize },
    Truncation(TruncationVictim),
    Lzb(LzbVictim),
}

impl VictimDescriptor {
    pub fn program(&self) -> VictimProgram {
        match self {
            VictimDescriptor::Region { filler, length } => make_region_victim(*filler, *length),
            VictimDescriptor::DeltaBranch(v) => v.program(),
            VictimDescriptor::Memcmp { input_len } => MemcmpVictim::program(*input_len),
            VictimDescriptor::Truncation(v) => v.program(),
            VictimDescriptor::Lzb(v) => v.program(),
        }
    }
}
