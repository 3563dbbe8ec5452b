// Speckles a synthetic phantom, denoises it and prints the quality change.
//
//   phantom_demo [size] [sigma] [seed]

#include <cstdlib>
#include <iostream>

#include <bmsmoe/bmsmoe.hpp>

int main(int argc, char** argv) {
  const int size = argc > 1 ? std::atoi(argv[1]) : 64;
  const double sigma = argc > 2 ? std::atof(argv[2]) : 0.2;
  const auto seed = static_cast<std::uint64_t>(argc > 3 ? std::atoll(argv[3]) : 7);

  const bmsmoe::ImageBuffer clean = bmsmoe::synthetic_phantom(size, size);
  const bmsmoe::ImageBuffer noisy = bmsmoe::add_speckle(clean, {sigma, seed});

  bmsmoe::DenoiseConfig cfg;
  cfg.seed = seed;
  cfg.workers = 0;
  const auto result = bmsmoe::denoise_image(noisy, cfg);

  std::cout << "noisy    " << bmsmoe::to_json(bmsmoe::evaluate_quality(clean, noisy)).dump() << '\n'
            << "denoised " << bmsmoe::to_json(bmsmoe::evaluate_quality(clean, result.image)).dump() << '\n'
            << "stats    " << bmsmoe::to_json(result.stats).dump() << '\n';
}
