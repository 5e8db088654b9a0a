//! Probabilistic primality and safe-prime search.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Miller-Rabin rounds; each round has error at most 1/4, so 40 rounds keep
/// the false-positive probability below 2^-80.
pub const MILLER_RABIN_ROUNDS: usize = 40;

const SIEVE_LIMIT: u32 = 2000;

fn small_primes() -> &'static [u32] {
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut sieve = vec![true; SIEVE_LIMIT as usize];
        sieve[0] = false;
        sieve[1] = false;
        let mut i = 2;
        while i * i < SIEVE_LIMIT as usize {
            if sieve[i] {
                for j in (i * i..SIEVE_LIMIT as usize).step_by(i) {
                    sieve[j] = false;
                }
            }
            i += 1;
        }
        (0..SIEVE_LIMIT).filter(|&i| sieve[i as usize]).collect()
    })
}

/// Exact primality by trial division. Only sensible for small inputs.
pub fn is_prime_trial_division(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Miller-Rabin with [`MILLER_RABIN_ROUNDS`] random bases.
///
/// Bases are drawn from a generator seeded by a hash of `n`, so the verdict
/// for a given input never changes between runs.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        if small < (SIEVE_LIMIT as u64) * (SIEVE_LIMIT as u64) {
            return is_prime_trial_division(small);
        }
    }
    for &sp in small_primes() {
        if (n % sp).is_zero() {
            return false;
        }
    }
    let seed: [u8; 32] = Sha256::digest(n.to_bytes_be()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    miller_rabin(n, MILLER_RABIN_ROUNDS, &mut rng)
}

fn miller_rabin<R: Rng>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// True when `p` and `(p - 1) / 2` are both prime.
pub fn is_safe_prime(p: &BigUint) -> bool {
    if p < &BigUint::from(5u32) || p.is_even() {
        return false;
    }
    let q: BigUint = p >> 1;
    is_probable_prime(&q) && is_probable_prime(p)
}

/// Searches for a safe prime `p = 2q + 1` with exactly `bits` bits.
///
/// Candidates for `q` are walked upward from a random odd start; residues
/// modulo small primes are tracked incrementally so most candidates are
/// discarded without any big-integer work.
pub fn random_safe_prime<R: Rng>(bits: u64, rng: &mut R) -> (BigUint, BigUint) {
    assert!(bits >= 5, "safe prime search needs at least 5 bits");
    let q_bits = bits - 1;
    let q_floor = BigUint::one() << (q_bits - 1);
    let q_ceiling = BigUint::one() << q_bits;
    let primes = small_primes();

    loop {
        let mut q = rng.gen_biguint(q_bits) | &q_floor | BigUint::one();
        let mut residues: Vec<u32> = primes
            .iter()
            .map(|&sp| (&q % sp).to_u32().expect("residue below u32"))
            .collect();
        let mut offset = 0u32;

        while q < q_ceiling {
            let sieved = primes.iter().zip(&residues).all(|(&sp, &r)| {
                let q_ok = r != 0 || q == BigUint::from(sp);
                let p_ok = (2 * r + 1) % sp != 0 || (&q * 2u32 + 1u32) == BigUint::from(sp);
                q_ok && p_ok
            });
            if sieved {
                let p: BigUint = &q * 2u32 + 1u32;
                // Cheap Fermat filter on p before the full tests.
                if BigUint::from(2u32).modpow(&(&p - 1u32), &p).is_one()
                    && is_probable_prime(&q)
                    && is_probable_prime(&p)
                {
                    return (p, q);
                }
            }
            q += 2u32;
            offset += 2;
            for (r, &sp) in residues.iter_mut().zip(primes) {
                *r = (*r + 2) % sp;
            }
            // Restart from a fresh point rather than drift across a huge gap.
            if offset > 1 << 20 {
                break;
            }
        }
    }
}
