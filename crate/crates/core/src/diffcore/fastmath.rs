//! Branch-free single-precision `exp` and `erf`, written so the compiler can
//! vectorize loops that call them.

const LOG2E: f32 = std::f32::consts::LOG2_E;
const LN2_HI: f32 = 0.693_359_375;
const LN2_LO: f32 = -2.121_944_4e-4;
const ROUND_MAGIC: f32 = 12_582_912.0; // 1.5 · 2²³

/// `eˣ` with about 2 ulp error on `[−87, 88]`; inputs are clamped to that
/// range.
#[inline(always)]
pub fn exp_f32(x: f32) -> f32 {
    let x = x.max(-87.0).min(88.0);
    let shifted = x * LOG2E + ROUND_MAGIC;
    let n = shifted - ROUND_MAGIC;
    // the integer value of n sits in the low mantissa bits of `shifted`
    let n_int = (shifted.to_bits() as i32).wrapping_sub(ROUND_MAGIC.to_bits() as i32);
    let r = x - n * LN2_HI - n * LN2_LO;
    let r2 = r * r;
    let p = 1.987_569_1e-4;
    let p = p * r + 1.398_199_9e-3;
    let p = p * r + 8.333_452e-3;
    let p = p * r + 4.166_579_6e-2;
    let p = p * r + 1.666_666_5e-1;
    let p = p * r + 5.000_000_1e-1;
    let y = p * r2 + r + 1.0;
    f32::from_bits((y.to_bits() as i32).wrapping_add(n_int << 23) as u32)
}

/// Error function via the Chebyshev-fitted complementary form
/// `erfc(z) = t·exp(−z² + P(t))`, `t = 1/(1 + z/2)`; absolute error below
/// 3e-7 everywhere after single-precision rounding.
#[inline(always)]
pub fn erf_f32(x: f32) -> f32 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -1.265_512_2
        + t * (1.000_023_7
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_9
                                + t * (1.488_515_9 + t * (-0.822_152_2 + t * 0.170_872_77))))))));
    let erfc = t * exp_f32(-z * z + poly);
    let sign = x.to_bits() & 0x8000_0000;
    f32::from_bits((1.0 - erfc).max(0.0).to_bits() | sign)
}
