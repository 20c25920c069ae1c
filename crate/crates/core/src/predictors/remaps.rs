//! The keyed remapping functions used by secret-token models.

use crate::bits::mask;
use crate::error::{Error, Result};
use crate::remap::{parse_netlist, LayeredFunction};
use crate::remap_gen::Role;
use std::path::Path;
use std::sync::{Arc, OnceLock};

/// One function per role, all validated against the role signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapSet {
    r1: LayeredFunction,
    r2: LayeredFunction,
    r3: LayeredFunction,
    r4: LayeredFunction,
    rt10: LayeredFunction,
    rt13: LayeredFunction,
    rp: LayeredFunction,
}

const SHIPPED: [(Role, &str); 7] = [
    (Role::R1, include_str!("../../netlists/r1.net")),
    (Role::R2, include_str!("../../netlists/r2.net")),
    (Role::R3, include_str!("../../netlists/r3.net")),
    (Role::R4, include_str!("../../netlists/r4.net")),
    (Role::Rt10, include_str!("../../netlists/rt10.net")),
    (Role::Rt13, include_str!("../../netlists/rt13.net")),
    (Role::Rp, include_str!("../../netlists/rp.net")),
];

impl RemapSet {
    /// The checked-in netlists.
    pub fn shipped() -> Arc<RemapSet> {
        static SET: OnceLock<Arc<RemapSet>> = OnceLock::new();
        SET.get_or_init(|| {
            let fs = SHIPPED.iter().map(|(r, text)| (*r, parse_netlist(text).expect("shipped netlist parses")));
            Arc::new(RemapSet::from_functions(fs).expect("shipped netlists match their roles"))
        })
        .clone()
    }

    pub fn shipped_text(role: Role) -> &'static str {
        SHIPPED.iter().find(|(r, _)| *r == role).map(|(_, t)| *t).expect("every role ships")
    }

    /// Loads `<role>.net` (lower-case role name) for every role from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut fs = Vec::new();
        for role in Role::ALL {
            let path = dir.join(format!("{}.net", role.name().to_lowercase()));
            let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingNetlist(role.to_string()))?;
            fs.push((role, parse_netlist(&text)?));
        }
        Self::from_functions(fs)
    }

    pub fn from_functions(fs: impl IntoIterator<Item = (Role, LayeredFunction)>) -> Result<Self> {
        let mut slots: [Option<LayeredFunction>; 7] = Default::default();
        for (role, f) in fs {
            if f.input_width() != role.input_width() || f.output_width() != role.output_width() {
                return Err(Error::RoleWidthMismatch { role: role.to_string() });
            }
            let i = Role::ALL.iter().position(|r| *r == role).expect("known role");
            slots[i] = Some(f);
        }
        let mut it = slots.into_iter().zip(Role::ALL);
        let mut take = || {
            let (f, role) = it.next().expect("seven roles");
            f.ok_or_else(|| Error::MissingNetlist(role.to_string()))
        };
        Ok(RemapSet { r1: take()?, r2: take()?, r3: take()?, r4: take()?, rt10: take()?, rt13: take()?, rp: take()? })
    }

    pub fn get(&self, role: Role) -> &LayeredFunction {
        match role {
            Role::R1 => &self.r1,
            Role::R2 => &self.r2,
            Role::R3 => &self.r3,
            Role::R4 => &self.r4,
            Role::Rt10 => &self.rt10,
            Role::Rt13 => &self.rt13,
            Role::Rp => &self.rp,
        }
    }

    /// Applies `role` to ψ ‖ data and splits the result into the role's
    /// fields, low field first. `data` is the role's input after the key:
    /// pc (R1, R3, Rp), BHB (R2), GHR ‖ pc (R4), pc ‖ folded history (Rt).
    pub fn fields(&self, role: Role, psi: u32, data: u128) -> Vec<u64> {
        let f = self.get(role);
        let x = (psi as u128 | data << 32) & mask(f.input_width());
        let y = f.eval(x);
        let mut lo = 0;
        role.fields()
            .iter()
            .map(|(_, w)| {
                let v = (y >> lo) & mask(*w);
                lo += w;
                v as u64
            })
            .collect()
    }

    pub fn r1(&self, psi: u32, pc: u64) -> (u64, u64, u64) {
        let y = self.r1.eval(psi as u128 | (pc as u128) << 32);
        ((y & 0x1ff) as u64, (y >> 9 & 0xff) as u64, (y >> 17 & 0x1f) as u64)
    }

    pub fn r2(&self, psi: u32, bhb: u64) -> u64 {
        self.r2.eval(psi as u128 | ((bhb as u128) & mask(58)) << 32) as u64
    }

    pub fn r3(&self, psi: u32, pc: u64) -> u64 {
        self.r3.eval(psi as u128 | (pc as u128) << 32) as u64
    }

    pub fn r4(&self, psi: u32, ghr16: u64, pc: u64) -> u64 {
        self.r4.eval(psi as u128 | ((ghr16 & 0xffff) as u128) << 32 | (pc as u128) << 48) as u64
    }

    /// (index, tag) for a tagged bank; `wide` picks the 13/12-bit variant.
    pub fn rt(&self, wide: bool, psi: u32, pc: u64, hist16: u64) -> (u64, u64) {
        let x = psi as u128 | (pc as u128) << 32 | ((hist16 & 0xffff) as u128) << 80;
        if wide {
            let y = self.rt13.eval(x);
            ((y & 0x1fff) as u64, (y >> 13 & 0xfff) as u64)
        } else {
            let y = self.rt10.eval(x);
            ((y & 0x3ff) as u64, (y >> 10 & 0xff) as u64)
        }
    }

    pub fn rp(&self, psi: u32, pc: u64) -> u64 {
        self.rp.eval(psi as u128 | (pc as u128) << 32) as u64
    }
}
