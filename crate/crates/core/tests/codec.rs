use proptest::prelude::*;
use rand::Rng;
use tnq_core::plan;
use tnq_core::quantizer::{
    encode, decode, levels_for_bits, pack_indices, unpack_indices, EncodedGradient, GradientVector, QuantConfig,
    QuantizationGrid, Scheme, HEADER_BITS,
};
use tnq_core::rng::{self, Purpose};
use tnq_core::Error;

#[test]
fn exhaustive_roundtrip_small_shapes() {
    let mut r = rng::global(12, Purpose::Test);
    for bits in 1..=8u8 {
        let s = levels_for_bits(bits);
        let grid = QuantizationGrid::uniform(1.0, s).unwrap();
        for d in 1..=64usize {
            let indices: Vec<u32> = (0..d).map(|_| r.random_range(0..=s as u32)).collect();
            let packed = pack_indices(&indices, bits);
            assert_eq!(packed.len(), (d * bits as usize).div_ceil(8));
            assert_eq!(unpack_indices(&packed, bits, d).unwrap(), indices);

            // values on grid points are encoded deterministically
            let values: Vec<f64> = indices.iter().map(|&k| grid.points()[k as usize]).collect();
            let g = GradientVector::new(values.clone()).unwrap();
            let config = QuantConfig::new(Scheme::Uq, bits, 1.0, 0.5).unwrap();
            let e = encode(&g, &config, &grid, &mut r).unwrap();
            let bytes = e.to_bytes();
            assert_eq!(bytes.len() as u64 * 8, HEADER_BITS + 8 * packed.len() as u64);
            let back = EncodedGradient::from_bytes(&bytes).unwrap();
            assert_eq!(back, e);
            assert_eq!(decode(&back, &grid).unwrap().as_slice(), values.as_slice());
        }
    }
}

#[test]
fn golden_file_bytes() {
    let g = GradientVector::new(vec![-1.0, 1.0 / 3.0, 1.0, -1.0 / 3.0]).unwrap();
    let e = plan::compress_layer(Scheme::Uq, 2, &g, &mut rng::global(0, Purpose::Quantize)).unwrap();
    let expected: Vec<u8> = [
        &b"TNQ1"[..],
        &[1, 3, 2, 0],
        &1.0f64.to_le_bytes(),
        &(2.0f64 / 3.0).to_le_bytes(),
        &4u64.to_le_bytes(),
        &[0b0111_1000],
    ]
    .concat();
    assert_eq!(e.to_bytes(), expected);
    assert_eq!(
        &expected[..16],
        &[0x54, 0x4E, 0x51, 0x31, 1, 3, 2, 0, 0, 0, 0, 0, 0, 0, 0xF0, 0x3F]
    );
    let decoded = plan::decompress_layer(&EncodedGradient::from_bytes(&expected).unwrap()).unwrap();
    assert_eq!(decoded, g);
}

#[test]
fn rejects_damaged_files() {
    let g = GradientVector::new(vec![0.5, -0.25, 2.0]).unwrap();
    let bytes = plan::compress_layer(Scheme::Tnq, 3, &g, &mut rng::global(1, Purpose::Quantize)).unwrap().to_bytes();
    assert!(matches!(EncodedGradient::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Length { .. })));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(EncodedGradient::from_bytes(&extra), Err(Error::Length { .. })));
    let mut bad = bytes.clone();
    bad[5] = 9;
    assert!(matches!(EncodedGradient::from_bytes(&bad), Err(Error::Format(_))));
    let mut bad = bytes;
    bad[6] = 0;
    assert!(matches!(EncodedGradient::from_bytes(&bad), Err(Error::Format(_))));
}

#[test]
fn zero_layer_costs_only_a_header() {
    let g = GradientVector::zeros(100).unwrap();
    let e = plan::compress_layer(Scheme::Tnq, 4, &g, &mut rng::global(2, Purpose::Quantize)).unwrap();
    assert!(e.header.is_zero_marker());
    assert_eq!(e.wire_bits(), HEADER_BITS);
    assert_eq!(plan::decompress_layer(&e).unwrap(), g);
}

proptest! {
    #[test]
    fn pack_roundtrip(bits in 1u8..=16, raw in proptest::collection::vec(any::<u32>(), 1..300)) {
        let s = levels_for_bits(bits) as u32;
        let indices: Vec<u32> = raw.iter().map(|v| v % (s + 1)).collect();
        let packed = pack_indices(&indices, bits);
        prop_assert_eq!(unpack_indices(&packed, bits, indices.len()).unwrap(), indices);
    }

    #[test]
    fn compress_roundtrip_every_scheme(
        values in proptest::collection::vec(-50.0f64..50.0, 1..200),
        bits in 1u8..=8,
        tag in 0u8..4,
        seed in any::<u64>(),
    ) {
        let scheme = Scheme::from_tag(tag).unwrap();
        let g = GradientVector::new(values).unwrap();
        let e = plan::compress_layer(scheme, bits, &g, &mut rng::global(seed, Purpose::Quantize)).unwrap();
        let back = EncodedGradient::from_bytes(&e.to_bytes()).unwrap();
        prop_assert_eq!(&back, &e);
        let decoded = plan::decompress_layer(&back).unwrap();
        prop_assert_eq!(decoded.dim(), g.dim());
        if !e.header.is_zero_marker() {
            let grid = plan::grid_for(scheme, bits, e.header.alpha, e.header.gamma).unwrap();
            for v in decoded.as_slice() {
                prop_assert!(grid.points().contains(v));
            }
        }
    }
}
