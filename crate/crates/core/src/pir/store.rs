use crate::error::{Error, Result};

/// `m` buckets of exactly `l` fixed-width slots, stored contiguously.
///
/// Nothing here records which slots hold data: padding and data are both
/// opaque slot bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BucketStore {
    buckets: usize,
    capacity: usize,
    slot_width: usize,
    generation: u64,
    data: Vec<u8>,
}

impl BucketStore {
    pub fn new(buckets: usize, capacity: usize, slot_width: usize) -> Result<Self> {
        if buckets == 0 || buckets > u32::MAX as usize {
            return Err(Error::param("bucket count must be in 1..=2^32-1"));
        }
        if capacity == 0 || capacity > u16::MAX as usize {
            return Err(Error::param("bucket capacity must be in 1..=65535"));
        }
        if slot_width == 0 || slot_width > u16::MAX as usize {
            return Err(Error::param("slot width must be in 1..=65535"));
        }
        let len = buckets
            .checked_mul(capacity)
            .and_then(|n| n.checked_mul(slot_width))
            .filter(|&n| n <= super::MAX_PAYLOAD - 8)
            .ok_or_else(|| Error::param("store too large for one frame"))?;
        Ok(Self {
            buckets,
            capacity,
            slot_width,
            generation: 0,
            data: vec![0; len],
        })
    }

    /// `m`
    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// `l`
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slot_width(&self) -> usize {
        self.slot_width
    }

    pub fn bucket_len(&self) -> usize {
        self.capacity * self.slot_width
    }

    /// Incremented by every write.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    fn check_bucket(&self, alpha: usize) -> Result<()> {
        if alpha >= self.buckets {
            return Err(Error::Protocol(format!(
                "bucket index {alpha} out of range 0..{}",
                self.buckets
            )));
        }
        Ok(())
    }

    pub fn bucket(&self, alpha: usize) -> Result<&[u8]> {
        self.check_bucket(alpha)?;
        let w = self.bucket_len();
        Ok(&self.data[alpha * w..(alpha + 1) * w])
    }

    pub fn slot(&self, alpha: usize, slot: usize) -> Result<&[u8]> {
        let b = self.bucket(alpha)?;
        if slot >= self.capacity {
            return Err(Error::Overflow { bucket: alpha });
        }
        Ok(&b[slot * self.slot_width..(slot + 1) * self.slot_width])
    }

    pub fn set_slot(&mut self, alpha: usize, slot: usize, bytes: &[u8]) -> Result<()> {
        self.check_bucket(alpha)?;
        if slot >= self.capacity {
            return Err(Error::Overflow { bucket: alpha });
        }
        if bytes.len() != self.slot_width {
            return Err(Error::Protocol(format!(
                "slot must be {} bytes, got {}",
                self.slot_width,
                bytes.len()
            )));
        }
        let start = alpha * self.bucket_len() + slot * self.slot_width;
        self.data[start..start + self.slot_width].copy_from_slice(bytes);
        self.generation += 1;
        Ok(())
    }

    /// Replaces every bucket at once.
    pub fn replace_all(&mut self, bytes: &[u8]) -> Result<()> {
        if bytes.len() != self.data.len() {
            return Err(Error::Protocol(format!(
                "store image must be {} bytes, got {}",
                self.data.len(),
                bytes.len()
            )));
        }
        self.data.copy_from_slice(bytes);
        self.generation += 1;
        Ok(())
    }

    pub(crate) fn from_parts(
        buckets: usize,
        capacity: usize,
        slot_width: usize,
        generation: u64,
        data: Vec<u8>,
    ) -> Result<Self> {
        let mut s = Self::new(buckets, capacity, slot_width)?;
        if data.len() != s.data.len() {
            return Err(Error::format("store image has the wrong length"));
        }
        s.data = data;
        s.generation = generation;
        Ok(s)
    }
}

/// Splits a full store image into bucket slices.
pub fn split_buckets(image: &[u8], bucket_len: usize) -> impl Iterator<Item = &[u8]> {
    image.chunks_exact(bucket_len)
}
