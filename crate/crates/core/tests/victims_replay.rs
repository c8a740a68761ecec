//! Declared instruction counts of every victim against a simulator replay
//! that single-steps the resolved path and sums the per-exit landings.

use irqcount_core::enclave::{mitigation_duration, EnclaveParams, EnclaveState, Machine, MitigationModel};
use irqcount_core::rng::stream;
use irqcount_core::victims::{
    binding, DeltaBranchVictim, Filler, LzbVictim, MemcmpVictim, TruncationVictim, LZB_LONG, LZB_SHORT,
};
use irqcount_core::{AexCause, Cycles, PreparedVictim, VictimProgram};
use num_bigint::BigUint;
use num_traits::One;

fn machine() -> Machine {
    Machine::new(EnclaveParams::default(), MitigationModel::default()).unwrap()
}

/// Retired instructions between the boundary faults, counted exit by exit.
fn replay(m: &Machine, program: &VictimProgram, b: &irqcount_core::enclave::SecretBinding) -> i64 {
    let pv = PreparedVictim::new(program, b, &m.params).unwrap();
    // late enough that at least one instruction retires per resume
    let fire = mitigation_duration(&m.mitigation, true, false) + Cycles::from_int(40);
    let mut st = EnclaveState::new(0, false);
    let mut rng = stream(17, 0);
    let mut total = 0;
    for _ in 0..10_000 {
        let (next, ev) = m.resume_and_run(&st, &pv, Some(fire), &mut rng).unwrap();
        assert!(ev.landing >= 1 || ev.cause == AexCause::PageFault, "no progress at {:?}", ev.erip);
        total += ev.landing;
        if ev.cause == AexCause::PageFault {
            assert_eq!(ev.erip.pos as i64, total);
            return total;
        }
        st = next;
    }
    panic!("replay did not reach the closing boundary");
}

#[test]
fn delta_branch_counts_match_replay() {
    let m = machine();
    for filler in [Filler::Nop, Filler::Addl] {
        for delta in [0, 1, 3, 6, 17] {
            for guess in [0, 1] {
                let v = DeltaBranchVictim::new(delta, guess, filler);
                let p = v.program();
                for s in [0, 1] {
                    assert_eq!(replay(&m, &p, &v.binding(s)), v.retired_count(s) as i64);
                }
                assert_eq!(v.retired_count(1 - guess) - v.retired_count(guess), delta);
            }
        }
    }
}

#[test]
fn delta_branch_path_lengths() {
    let zero = DeltaBranchVictim::new(0, 0, Filler::Nop);
    assert_eq!((zero.path_length(0), zero.path_length(1)), (10, 10));
    let six = DeltaBranchVictim::new(6, 0, Filler::Nop);
    assert_eq!((six.path_length(0), six.path_length(1)), (10, 16));
}

fn all_strings(alphabet: &[u8], max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| alphabet.iter().map(move |c| format!("{p}{}", *c as char)))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

#[test]
fn memcmp_counts_match_replay_exhaustively() {
    let m = machine();
    let words = all_strings(b"ABC", 3);
    for secret in &words {
        let v = MemcmpVictim::new(secret).unwrap();
        for input in &words {
            let p = MemcmpVictim::program(input.len());
            let got = replay(&m, &p, &v.binding(input).unwrap());
            assert_eq!(got, v.retired_count(input) as i64, "secret {secret} input {input}");
        }
    }
}

#[test]
fn memcmp_block_oracle() {
    let v = MemcmpVictim::new("SECRET").unwrap();
    assert_eq!(v.compare_blocks("SEC"), 0);
    assert_eq!(v.compare_blocks("AAAAAA"), 1);
    assert_eq!(v.compare_blocks("SECAAA"), 4);
    assert_eq!(v.compare_blocks("SECRET"), 6);
    let mismatch = v.retired_count("SECREA");
    assert!(v.retired_count("SECRET") > mismatch);
    assert!(v.retired_count("SEC") < v.retired_count("AAAAAA"));
    let all: Vec<usize> = all_strings(b"SECRTA", 2).iter().map(|s| v.retired_count(s)).collect();
    assert!(all.iter().all(|&c| c < v.retired_count("SECRET")));
}

fn top_bits(pattern: u64, width: u32) -> BigUint {
    // pattern in the top `width` bits, ones below
    (BigUint::from(pattern) << (160 - width as u64)) + ((BigUint::one() << (160 - width as u64)) - 1u8)
}

#[test]
fn truncation_predicate_cases() {
    let m = machine();
    let v = TruncationVictim::default();
    let p = v.program();
    let biased = top_bits(0x7fff, 15);
    let near = top_bits(0x7ffe, 15);
    let low = BigUint::from(12345u32);
    assert!(v.is_biased(&biased));
    assert!(!v.is_biased(&near));
    assert!(!v.is_biased(&low));
    let short = replay(&m, &p, &binding(&[("biased", 0)]));
    let long = replay(&m, &p, &binding(&[("biased", 1)]));
    assert_eq!(long - short, 52);
    assert_eq!(replay(&m, &p, &v.binding(&biased)), long);
    assert_eq!(replay(&m, &p, &v.binding(&near)), short);
    assert_eq!(replay(&m, &p, &v.binding(&low)), short);
}

#[test]
fn lzb_predicate_cases() {
    let m = machine();
    let v = LzbVictim::default();
    let p = v.program();
    let one = BigUint::one();
    let cases = [
        ((&one << 154u32) + 7u8, true),
        ((&one << 155u32) - 1u8, true),
        (&one << 155u32, false),
        (&one << 159u32, false),
    ];
    for (nonce, biased) in cases {
        assert_eq!(v.is_biased(&nonce), biased, "{nonce}");
        let want = if biased { LZB_LONG } else { LZB_SHORT };
        assert_eq!(replay(&m, &p, &v.binding(&nonce)), want as i64);
    }
}
