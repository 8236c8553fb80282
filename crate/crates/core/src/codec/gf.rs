//! Arithmetic in GF(2^16), reduced by x^16 + x^12 + x^3 + x + 1.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::OnceLock;

const POLY: u32 = 0x1_100B;
const ORDER: usize = 1 << 16;
const GROUP: usize = ORDER - 1;

pub const FIELD_ORDER: u64 = ORDER as u64;

struct Tables {
    log: Vec<u16>,
    // Doubled so `exp[log a + log b]` never needs a modulo.
    exp: Vec<u16>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut log = vec![0u16; ORDER];
        let mut exp = vec![0u16; 2 * GROUP];
        let mut x: u32 = 1;
        for i in 0..GROUP {
            exp[i] = x as u16;
            exp[i + GROUP] = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & 0x1_0000 != 0 {
                x ^= POLY;
            }
        }
        debug_assert_eq!(x, 1, "x must generate the multiplicative group");
        Tables { log, exp }
    })
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gf16(pub u16);

impl Gf16 {
    pub const ZERO: Gf16 = Gf16(0);
    pub const ONE: Gf16 = Gf16(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn inv(self) -> Gf16 {
        assert!(!self.is_zero(), "inverse of zero in GF(2^16)");
        let t = tables();
        Gf16(t.exp[GROUP - t.log[self.0 as usize] as usize])
    }

    pub fn pow(self, mut e: u64) -> Gf16 {
        let mut base = self;
        let mut acc = Gf16::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }
}

impl fmt::Debug for Gf16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf16({:#06x})", self.0)
    }
}

impl Add for Gf16 {
    type Output = Gf16;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf16) -> Gf16 {
        Gf16(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf16 {
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf16) {
        self.0 ^= rhs.0;
    }
}

impl Sub for Gf16 {
    type Output = Gf16;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Gf16) -> Gf16 {
        Gf16(self.0 ^ rhs.0)
    }
}

impl Mul for Gf16 {
    type Output = Gf16;
    fn mul(self, rhs: Gf16) -> Gf16 {
        if self.is_zero() || rhs.is_zero() {
            return Gf16::ZERO;
        }
        let t = tables();
        Gf16(t.exp[t.log[self.0 as usize] as usize + t.log[rhs.0 as usize] as usize])
    }
}

impl MulAssign for Gf16 {
    fn mul_assign(&mut self, rhs: Gf16) {
        *self = *self * rhs;
    }
}

impl Div for Gf16 {
    type Output = Gf16;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Gf16) -> Gf16 {
        self * rhs.inv()
    }
}
