use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::intent::abi::{encode_args, AbiValue};
use crate::intent::TransactionPayload;
use crate::primitives::{Address, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pattern {
    CleanTransfer,
    CleanSwap,
    UnlimitedApprovalPhish,
    ObfuscatedCalldata,
    UiMismatch,
    DelegateHijack,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::CleanTransfer,
        Pattern::CleanSwap,
        Pattern::UnlimitedApprovalPhish,
        Pattern::ObfuscatedCalldata,
        Pattern::UiMismatch,
        Pattern::DelegateHijack,
    ];

    pub fn label(self) -> GroundTruth {
        match self {
            Pattern::CleanTransfer | Pattern::CleanSwap => GroundTruth::Safe,
            _ => GroundTruth::Unsafe,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown pattern `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTransaction {
    pub id: u64,
    pub payload: TransactionPayload,
    pub ground_truth: GroundTruth,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("pattern weights must be nonnegative and sum to 1 (got {0})")]
    Weights(f64),
    #[error("{field} must lie in [0, 1], got {value}")]
    Fraction { field: &'static str, value: f64 },
    #[error("{0}")]
    Schema(String),
}

fn default_claim_leak() -> f64 {
    0.001
}

fn equal_mix() -> BTreeMap<Pattern, f64> {
    Pattern::ALL.iter().map(|p| (*p, 1.0 / Pattern::ALL.len() as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub size: usize,
    pub adversarial_fraction: f64,
    /// Defaults to equal weights.
    #[serde(default = "equal_mix")]
    pub pattern_mix: BTreeMap<Pattern, f64>,
    pub seed: u64,
    /// Fraction of items whose interface text quotes the sender address, a
    /// field the interface text is not supposed to carry.
    #[serde(default = "default_claim_leak")]
    pub claim_leak_fraction: f64,
}

impl CorpusSpec {
    pub fn new(size: usize, adversarial_fraction: f64, seed: u64) -> Self {
        CorpusSpec {
            size,
            adversarial_fraction,
            pattern_mix: equal_mix(),
            seed,
            claim_leak_fraction: default_claim_leak(),
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, CorpusError> {
        let spec: CorpusSpec = serde_json::from_str(doc).map_err(|e| CorpusError::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (field, value) in [
            ("adversarial_fraction", self.adversarial_fraction),
            ("claim_leak_fraction", self.claim_leak_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CorpusError::Fraction { field, value });
            }
        }
        let sum: f64 = self.pattern_mix.values().sum();
        if self.pattern_mix.values().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Weights(sum));
        }
        Ok(())
    }

    /// Number of items of each pattern: the class split follows
    /// `adversarial_fraction`, each class is divided by its normalized
    /// weights with largest-remainder rounding.
    pub fn quotas(&self) -> BTreeMap<Pattern, usize> {
        let unsafe_n = (self.size as f64 * self.adversarial_fraction).round() as usize;
        let safe_n = self.size - unsafe_n.min(self.size);
        let mut out = BTreeMap::new();
        for (class, n) in [(GroundTruth::Safe, safe_n), (GroundTruth::Unsafe, unsafe_n)] {
            let members: Vec<Pattern> = Pattern::ALL.into_iter().filter(|p| p.label() == class).collect();
            let mut weights: Vec<f64> = members
                .iter()
                .map(|p| self.pattern_mix.get(p).copied().unwrap_or(0.0))
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                weights = vec![1.0; members.len()];
            }
            let total: f64 = weights.iter().sum();
            let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
            let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut order: Vec<usize> = (0..members.len()).collect();
            order.sort_by(|a, b| {
                let ra = exact[*a] - exact[*a].floor();
                let rb = exact[*b] - exact[*b].floor();
                rb.total_cmp(&ra).then(a.cmp(b))
            });
            let assigned: usize = counts.iter().sum();
            for k in order.into_iter().take(n - assigned) {
                counts[k] += 1;
            }
            for (p, c) in members.into_iter().zip(counts) {
                out.insert(p, c);
            }
        }
        out
    }
}

pub mod known {
    //! Mainnet addresses the shipped profiles allowlist.
    use crate::primitives::Address;

    fn parse(s: &str) -> Address {
        s.parse().expect("valid literal")
    }

    pub fn uniswap_v2_router() -> Address {
        parse("0x7a250d5630b4cf539739df2c5dacb4c659f2488d")
    }

    pub fn uniswap_v3_router() -> Address {
        parse("0xe592427a0aece92de3edee1f18e0157c05861564")
    }

    pub fn usdc() -> Address {
        parse("0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48")
    }

    pub fn weth() -> Address {
        parse("0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2")
    }

    pub fn dai() -> Address {
        parse("0x6b175474e89094c44da98b954eedeac495271d0f")
    }

    pub fn uni() -> Address {
        parse("0x1f9840a85d5af5bf1d1762f925bdaddc4201f984")
    }

    /// (symbol, contract, decimals)
    pub fn tokens() -> [(&'static str, Address, u32); 4] {
        [("USDC", usdc(), 6), ("DAI", dai(), 18), ("WETH", weth(), 18), ("UNI", uni(), 18)]
    }
}

fn call(signature: &str, args: &[AbiValue]) -> Vec<u8> {
    let mut data = Selector::of_signature(signature).0.to_vec();
    data.extend(encode_args(args));
    data
}

struct Gen {
    rng: ChaCha8Rng,
    sender: Address,
}

impl Gen {
    fn address(&mut self) -> Address {
        loop {
            let a = Address(self.rng.gen());
            if a != self.sender && !a.is_zero() {
                return a;
            }
        }
    }

    fn token(&mut self) -> (&'static str, Address, u32) {
        let tokens = known::tokens();
        tokens[self.rng.gen_range(0..tokens.len())]
    }

    fn units(&mut self, decimals: u32, lo: u64, hi: u64) -> (u64, U256) {
        let whole = self.rng.gen_range(lo..=hi);
        (whole, U256::from(whole) * U256::exp10(decimals as usize))
    }

    fn router(&mut self) -> Address {
        if self.rng.gen_bool(0.5) {
            known::uniswap_v2_router()
        } else {
            known::uniswap_v3_router()
        }
    }

    fn deadline(&mut self) -> U256 {
        U256::from(self.rng.gen_range(1_700_000_000u64..1_900_000_000))
    }

    fn tx(&mut self, to: Option<Address>, value: U256, calldata: Vec<u8>, gas: u64, claim: String) -> TransactionPayload {
        TransactionPayload {
            chain_id: 1,
            sender: self.sender,
            destination: to,
            value,
            calldata,
            gas_limit: gas,
            nonce: self.rng.gen_range(0..5000),
            ui_claim: Some(claim),
        }
    }

    fn clean_transfer(&mut self) -> TransactionPayload {
        let to = self.address();
        if self.rng.gen_bool(0.5) {
            let (n, wei) = self.units(15, 1, 5000);
            let claim = format!("Send {:.3} ETH", n as f64 / 1000.0);
            self.tx(Some(to), wei, Vec::new(), 21_000, claim)
        } else {
            let (sym, token, dec) = self.token();
            let (n, amount) = self.units(dec, 1, 2000);
            let data = call("transfer(address,uint256)", &[AbiValue::Address(to), AbiValue::Uint(amount)]);
            self.tx(Some(token), U256::zero(), data, 65_000, format!("Send {n} {sym}"))
        }
    }

    fn clean_swap(&mut self) -> TransactionPayload {
        let (sym, token, dec) = self.token();
        let me = self.sender;
        match self.rng.gen_range(0..4) {
            0 => {
                let router = self.router();
                let data = call(
                    "approve(address,uint256)",
                    &[AbiValue::Address(router), AbiValue::Uint(U256::MAX)],
                );
                self.tx(Some(token), U256::zero(), data, 50_000, format!("Approve {sym} for trading"))
            }
            1 => {
                let (n, wei) = self.units(16, 1, 300);
                let deadline = self.deadline();
                let data = call(
                    "swapExactETHForTokens(uint256,address[],address,uint256)",
                    &[
                        AbiValue::Uint(U256::from(self.rng.gen_range(1u64..1_000_000))),
                        AbiValue::Array(vec![AbiValue::Address(known::weth()), AbiValue::Address(token)]),
                        AbiValue::Address(me),
                        AbiValue::Uint(deadline),
                    ],
                );
                let claim = format!("Swap {:.2} ETH for {sym}", n as f64 / 100.0);
                self.tx(Some(known::uniswap_v2_router()), wei, data, 180_000, claim)
            }
            2 => {
                let (n, amount) = self.units(dec, 1, 1000);
                let deadline = self.deadline();
                let data = call(
                    "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)",
                    &[
                        AbiValue::Uint(amount),
                        AbiValue::Uint(U256::from(self.rng.gen_range(1u64..1_000_000))),
                        AbiValue::Array(vec![AbiValue::Address(token), AbiValue::Address(known::weth())]),
                        AbiValue::Address(me),
                        AbiValue::Uint(deadline),
                    ],
                );
                self.tx(
                    Some(known::uniswap_v2_router()),
                    U256::zero(),
                    data,
                    200_000,
                    format!("Swap {n} {sym} for WETH"),
                )
            }
            _ => {
                let (n, amount) = self.units(dec, 1, 1000);
                let deadline = self.deadline();
                let params = AbiValue::Tuple(vec![
                    AbiValue::Address(token),
                    AbiValue::Address(known::weth()),
                    AbiValue::Uint(U256::from(3000)),
                    AbiValue::Address(me),
                    AbiValue::Uint(deadline),
                    AbiValue::Uint(amount),
                    AbiValue::Uint(U256::from(self.rng.gen_range(1u64..1_000_000))),
                    AbiValue::Uint(U256::zero()),
                ]);
                let data = call(
                    "exactInputSingle((address,address,uint24,address,uint256,uint256,uint256,uint160))",
                    &[params],
                );
                self.tx(
                    Some(known::uniswap_v3_router()),
                    U256::zero(),
                    data,
                    220_000,
                    format!("Swap {n} {sym} for WETH"),
                )
            }
        }
    }

    fn approval_phish(&mut self) -> TransactionPayload {
        let (sym, token, _) = self.token();
        let attacker = self.address();
        let spender = AbiValue::Address(attacker);
        match self.rng.gen_range(0..4) {
            0 => {
                let data = call("approve(address,uint256)", &[spender, AbiValue::Uint(U256::MAX)]);
                self.tx(Some(token), U256::zero(), data, 50_000, format!("Approve {sym}"))
            }
            1 => {
                let deadline = self.deadline();
                let (r, s): ([u8; 32], [u8; 32]) = (self.rng.gen(), self.rng.gen());
                let data = call(
                    "permit(address,address,uint256,uint256,uint8,bytes32,bytes32)",
                    &[
                        AbiValue::Address(self.sender),
                        spender,
                        AbiValue::Uint(U256::MAX),
                        AbiValue::Uint(deadline),
                        AbiValue::Uint(U256::from(27 + self.rng.gen_range(0u8..2))),
                        AbiValue::FixedBytes(r.to_vec()),
                        AbiValue::FixedBytes(s.to_vec()),
                    ],
                );
                self.tx(Some(token), U256::zero(), data, 90_000, format!("Sign in to claim {sym} rewards"))
            }
            2 => {
                let data = call("increaseAllowance(address,uint256)", &[spender, AbiValue::Uint(U256::MAX)]);
                self.tx(Some(token), U256::zero(), data, 55_000, format!("Approve {sym} for staking"))
            }
            _ => {
                let collection = self.address();
                let data = call("setApprovalForAll(address,bool)", &[spender, AbiValue::Bool(true)]);
                self.tx(Some(collection), U256::zero(), data, 60_000, "Mint your free NFT".into())
            }
        }
    }

    fn obfuscated(&mut self) -> TransactionPayload {
        let (sym, token, _) = self.token();
        let attacker = self.address();
        match self.rng.gen_range(0..4) {
            0 => {
                let mut data: Vec<u8> = self.rng.gen::<[u8; 4]>().to_vec();
                let words = self.rng.gen_range(1..4);
                for _ in 0..words * 32 {
                    data.push(self.rng.gen());
                }
                let (_, wei) = self.units(16, 1, 200);
                let to = self.address();
                self.tx(Some(to), wei, data, 150_000, "Claim airdrop".into())
            }
            1 => {
                let mut data = call(
                    "approve(address,uint256)",
                    &[AbiValue::Address(attacker), AbiValue::Uint(U256::MAX)],
                );
                let junk = self.rng.gen_range(1..31);
                for _ in 0..junk {
                    data.push(self.rng.gen());
                }
                self.tx(Some(token), U256::zero(), data, 60_000, format!("Approve {sym}"))
            }
            2 => {
                let mut data = call(
                    "approve(address,uint256)",
                    &[AbiValue::Address(attacker), AbiValue::Uint(U256::MAX)],
                );
                let cut = self.rng.gen_range(1..32);
                data.truncate(data.len() - cut);
                self.tx(Some(token), U256::zero(), data, 60_000, format!("Approve {sym}"))
            }
            _ => {
                let mut data = call(
                    "approve(address,uint256)",
                    &[AbiValue::Address(attacker), AbiValue::Uint(U256::MAX)],
                );
                // Non-zero bytes above the 20-byte address in its word.
                let dirty = self.rng.gen_range(1..=12);
                for b in &mut data[4..4 + dirty] {
                    *b = self.rng.gen_range(1..=255);
                }
                self.tx(Some(token), U256::zero(), data, 60_000, format!("Approve {sym}"))
            }
        }
    }

    fn ui_mismatch(&mut self) -> TransactionPayload {
        let (sym, token, dec) = self.token();
        let attacker = self.address();
        match self.rng.gen_range(0..3) {
            0 => {
                let (n, amount) = self.units(dec, 10, 5000);
                let data = call(
                    "transfer(address,uint256)",
                    &[AbiValue::Address(attacker), AbiValue::Uint(amount)],
                );
                self.tx(Some(token), U256::zero(), data, 65_000, format!("Swap {n} {sym} for ETH"))
            }
            1 => {
                let (n, amount) = self.units(dec, 100, 100_000);
                let data = call(
                    "approve(address,uint256)",
                    &[AbiValue::Address(attacker), AbiValue::Uint(amount)],
                );
                self.tx(Some(token), U256::zero(), data, 50_000, format!("Swap {n} {sym} for ETH"))
            }
            _ => {
                let (n, wei) = self.units(16, 10, 500);
                let claim = format!("Swap {:.2} ETH for {sym}", n as f64 / 100.0);
                self.tx(Some(attacker), wei, Vec::new(), 21_000, claim)
            }
        }
    }

    fn delegate_hijack(&mut self) -> TransactionPayload {
        let attacker = self.address();
        match self.rng.gen_range(0..2) {
            0 => {
                let data = call("delegate(address)", &[AbiValue::Address(attacker)]);
                self.tx(Some(known::uni()), U256::zero(), data, 90_000, "Delegate votes".into())
            }
            _ => {
                let contract = self.address();
                let data = call("transferOwnership(address)", &[AbiValue::Address(attacker)]);
                self.tx(Some(contract), U256::zero(), data, 45_000, "Update vault settings".into())
            }
        }
    }

    fn generate(&mut self, pattern: Pattern) -> TransactionPayload {
        match pattern {
            Pattern::CleanTransfer => self.clean_transfer(),
            Pattern::CleanSwap => self.clean_swap(),
            Pattern::UnlimitedApprovalPhish => self.approval_phish(),
            Pattern::ObfuscatedCalldata => self.obfuscated(),
            Pattern::UiMismatch => self.ui_mismatch(),
            Pattern::DelegateHijack => self.delegate_hijack(),
        }
    }
}

/// Builds one payload of `pattern` from its own seed.
pub fn generate_item(pattern: Pattern, seed: u64, claim_leak_fraction: f64) -> TransactionPayload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sender = Address(rng.gen());
    let mut g = Gen { rng, sender };
    let mut tx = g.generate(pattern);
    if claim_leak_fraction > 0.0 && g.rng.gen_bool(claim_leak_fraction) {
        let claim = tx.ui_claim.take().unwrap_or_default();
        tx.ui_claim = Some(format!("{claim} from {}", tx.sender));
    }
    tx
}

/// Deterministic corpus: quotas per pattern, a seeded shuffle of positions,
/// then each item generated from a seed derived from `(spec.seed, index)`.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<LabeledTransaction> {
    let mut patterns: Vec<Pattern> = spec
        .quotas()
        .into_iter()
        .flat_map(|(p, n)| std::iter::repeat_n(p, n))
        .collect();
    patterns.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    patterns
        .into_iter()
        .enumerate()
        .map(|(i, pattern)| LabeledTransaction {
            id: i as u64,
            payload: generate_item(pattern, derive_seed(spec.seed, i as u64), spec.claim_leak_fraction),
            ground_truth: pattern.label(),
            pattern,
        })
        .collect()
}

pub fn corpus_to_jsonl(corpus: &[LabeledTransaction]) -> String {
    let mut out = String::new();
    for item in corpus {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    out
}

pub fn corpus_from_jsonl(doc: &str) -> Result<Vec<LabeledTransaction>, serde_json::Error> {
    doc.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
