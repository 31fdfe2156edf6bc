//! MSB-first bit packing.

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    pub(crate) fn with_capacity(bytes: usize) -> Self {
        BitWriter {
            out: Vec::with_capacity(bytes),
            acc: 0,
            nbits: 0,
        }
    }

    /// Appends the low `n` bits of `value`, most significant first.
    #[inline]
    pub(crate) fn write(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        if n > 32 {
            self.write_small(value >> 32, n - 32);
            self.write_small(value & 0xffff_ffff, 32);
        } else {
            self.write_small(value, n);
        }
    }

    #[inline]
    fn write_small(&mut self, value: u64, n: u32) {
        if n == 0 {
            return;
        }
        let mask = (1u64 << n) - 1;
        self.acc = (self.acc << n) | (value & mask);
        self.nbits += n;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

#[derive(Debug)]
pub(crate) struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0 }
    }

    pub(crate) fn total_bits(&self) -> u64 {
        self.data.len() as u64 * 8
    }

    pub(crate) fn position(&self) -> u64 {
        self.pos
    }

    /// Next `n <= 32` bits without consuming them; zero-padded past the end.
    #[inline]
    pub(crate) fn peek(&self, n: u32) -> u64 {
        debug_assert!(n <= 32);
        if n == 0 {
            return 0;
        }
        let byte = (self.pos / 8) as usize;
        let off = (self.pos % 8) as u32;
        let mut buf = [0u8; 8];
        if byte < self.data.len() {
            let end = (byte + 8).min(self.data.len());
            buf[..end - byte].copy_from_slice(&self.data[byte..end]);
        }
        let word = u64::from_be_bytes(buf);
        (word << off) >> (64 - n)
    }

    #[inline]
    pub(crate) fn consume(&mut self, n: u32) -> Result<()> {
        self.pos += u64::from(n);
        if self.pos > self.total_bits() {
            return Err(Error::corrupt("bit stream ended early"));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn read(&mut self, n: u32) -> Result<u64> {
        if n > 32 {
            let hi = self.peek(n - 32);
            self.consume(n - 32)?;
            let lo = self.peek(32);
            self.consume(32)?;
            Ok((hi << 32) | lo)
        } else {
            let v = self.peek(n);
            self.consume(n)?;
            Ok(v)
        }
    }
}
