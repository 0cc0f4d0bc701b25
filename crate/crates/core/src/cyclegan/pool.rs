use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Tensor;

/// History of generated images replayed to the discriminator.
///
/// Until full, every query is stored and returned as-is. Once full, a query
/// returns a random stored image (replacing it with the new one) with
/// probability ½, and the new image otherwise.
#[derive(Clone, Debug)]
pub struct ImagePool {
    capacity: usize,
    images: Vec<Tensor>,
    rng: ChaCha8Rng,
}

impl ImagePool {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            images: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Returns the image to show the discriminator and whether it came from history.
    pub fn query_one(&mut self, image: Tensor) -> (Tensor, bool) {
        if self.capacity == 0 {
            return (image, false);
        }
        if self.images.len() < self.capacity {
            self.images.push(image.clone());
            return (image, false);
        }
        if self.rng.gen_bool(0.5) {
            let idx = self.rng.gen_range(0..self.capacity);
            let old = std::mem::replace(&mut self.images[idx], image);
            (old, true)
        } else {
            (image, false)
        }
    }

    /// Applies [`Self::query_one`] to every item of a batch.
    pub fn query(&mut self, batch: &Tensor) -> Tensor {
        let items: Vec<Tensor> = batch.unstack().into_iter().map(|t| self.query_one(t).0).collect();
        Tensor::stack(&items)
    }
}
