#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"
#include "dsg/image.hpp"
#include "dsg/image_io.hpp"
#include "dsg/prompts.hpp"
#include "dsg/rasterizer.hpp"
#include "dsg/rng.hpp"

namespace dsg {

struct DiffusionParams {
  double conditioning_scale = 1.5;  // how strongly the backend honors the control image
  int steps = 30;
  double guidance = 7.5;
  uint64_t seed = 0;
  int resolution = 512;  // backend working resolution; must match the render

  void validate() const {
    if (conditioning_scale <= 0) fail(Errc::invalid_argument, "conditioning_scale must be > 0");
    if (steps < 1) fail(Errc::invalid_argument, "steps must be >= 1");
    if (resolution < 8) fail(Errc::invalid_argument, "resolution too small");
  }
};

// 8-bit depth-conditioning image: nearer surfaces brighter, covered pixels in
// [1, 255], no-hit pixels 0. A constant-depth scene maps every covered pixel
// to 255.
struct ControlImage {
  ImageU8 image;  // single channel
};

inline ControlImage depth_to_control_image(const Framebuffer& fb) {
  ControlImage out;
  out.image = ImageU8(fb.width, fb.height, 1);
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (size_t i = 0; i < fb.depth.size(); ++i) {
    if (fb.instance[i] == 0) continue;
    dmin = std::min(dmin, static_cast<double>(fb.depth[i]));
    dmax = std::max(dmax, static_cast<double>(fb.depth[i]));
  }
  if (!(dmax >= dmin)) return out;  // nothing covered -> all zeros
  const bool degenerate = (dmax - dmin) < 1e-12;
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      size_t i = fb.index(x, y);
      if (fb.instance[i] == 0) continue;
      if (degenerate) {
        out.image.at(x, y) = 255;
      } else {
        double v = std::round(255.0 * (dmax - fb.depth[i]) / (dmax - dmin));
        out.image.at(x, y) = static_cast<uint8_t>(std::clamp(v, 1.0, 255.0));
      }
    }
  return out;
}

// Morphological dilation with a (2r+1)^2 square structuring element,
// implemented as separable horizontal+vertical sliding max.
inline ImageU8 dilate_mask(const ImageU8& mask, int radius) {
  if (radius < 0) fail(Errc::invalid_argument, "dilation radius must be >= 0");
  if (mask.channels != 1) fail(Errc::invalid_argument, "dilate_mask expects a single channel");
  if (radius == 0) return mask;
  ImageU8 tmp(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      uint8_t v = 0;
      for (int dx = -radius; dx <= radius; ++dx) {
        int xi = x + dx;
        if (xi >= 0 && xi < mask.width) v = std::max(v, mask.at(xi, y));
      }
      tmp.at(x, y) = v;
    }
  ImageU8 out(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      uint8_t v = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        int yi = y + dy;
        if (yi >= 0 && yi < mask.height) v = std::max(v, tmp.at(x, yi));
      }
      out.at(x, y) = v;
    }
  return out;
}

inline ImageU8 mask_complement(const ImageU8& mask) {
  ImageU8 out(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.data.size(); ++i) out.data[i] = mask.data[i] ? 0 : 255;
  return out;
}

inline ImageU8 instance_mask(const Framebuffer& fb, uint8_t id) {
  ImageU8 out(fb.width, fb.height, 1);
  for (size_t i = 0; i < fb.instance.size(); ++i) out.data[i] = fb.instance[i] == id ? 255 : 0;
  return out;
}

// --- wire protocol types ---

struct TexturingRequest {
  enum class Mode { depth_texture, inpaint };

  Mode mode = Mode::depth_texture;
  std::string prompt;
  ImageU8 control;  // depth_texture: single-channel control image
  ImageU8 image;    // inpaint: RGB input
  ImageU8 mask;     // inpaint: nonzero = regenerate
  DiffusionParams params;
};

struct TexturingResult {
  ImageU8 rgb;
  double latency_s = 0;
  std::string backend_id;
};

struct BackendCall {
  TexturingRequest::Mode mode;
  std::string prompt;
  uint64_t seed = 0;
  int width = 0, height = 0;
};

class TexturingClient {
 public:
  virtual ~TexturingClient() = default;

  TexturingResult submit(const TexturingRequest& req) {
    BackendCall call;
    call.mode = req.mode;
    call.prompt = req.prompt;
    call.seed = req.params.seed;
    if (req.mode == TexturingRequest::Mode::depth_texture) {
      call.width = req.control.width;
      call.height = req.control.height;
    } else {
      call.width = req.image.width;
      call.height = req.image.height;
    }
    log_.push_back(call);
    return do_submit(req);
  }

  const std::vector<BackendCall>& call_log() const { return log_; }
  void clear_call_log() { log_.clear(); }

 protected:
  virtual TexturingResult do_submit(const TexturingRequest& req) = 0;

 private:
  std::vector<BackendCall> log_;
};

// --- deterministic mock backend contract ---
//
// Pixel (x, y) of the generated image is a hash pattern of
// (prompt, seed, conditioning_scale, x/16, y/16); where a control image is
// provided the pattern is blended 50/50 with it. Inpaint mode copies the
// input image exactly outside the mask. Both the in-process client and the
// HTTP mock server share these functions, so golden files agree.

inline constexpr const char* kMockBackendId = "mock-v1";

inline uint64_t mock_pattern_seed(const std::string& prompt, uint64_t seed, double ccs) {
  return mix_u64(mix_u64(fnv1a64(prompt), seed), bits_of(ccs));
}

inline ImageU8 mock_pattern(const std::string& prompt, const DiffusionParams& params, int width,
                            int height, const ImageU8* control) {
  uint64_t h0 = mock_pattern_seed(prompt, params.seed, params.conditioning_scale);
  ImageU8 out(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      uint64_t h = mix_u64(mix_u64(h0, static_cast<uint64_t>(x / 16)),
                           static_cast<uint64_t>(y / 16));
      uint8_t rgb[3] = {static_cast<uint8_t>(h & 0xff), static_cast<uint8_t>((h >> 8) & 0xff),
                        static_cast<uint8_t>((h >> 16) & 0xff)};
      for (int c = 0; c < 3; ++c) {
        int v = rgb[c];
        if (control) v = (v + control->at(x, y)) / 2;
        out.at(x, y, c) = static_cast<uint8_t>(v);
      }
    }
  return out;
}

inline TexturingResult mock_generate(const TexturingRequest& req) {
  TexturingResult res;
  res.backend_id = kMockBackendId;
  if (req.mode == TexturingRequest::Mode::depth_texture) {
    if (req.control.empty()) fail(Errc::invalid_argument, "depth_texture request without control");
    res.rgb = mock_pattern(req.prompt, req.params, req.control.width, req.control.height,
                           &req.control);
  } else {
    if (req.image.empty() || req.mask.empty())
      fail(Errc::invalid_argument, "inpaint request needs image and mask");
    if (req.image.width != req.mask.width || req.image.height != req.mask.height)
      fail(Errc::shape_mismatch, "inpaint image/mask size mismatch");
    ImageU8 pattern = mock_pattern(req.prompt, req.params, req.image.width, req.image.height,
                                   nullptr);
    res.rgb = ImageU8(req.image.width, req.image.height, 3);
    for (int y = 0; y < res.rgb.height; ++y)
      for (int x = 0; x < res.rgb.width; ++x)
        for (int c = 0; c < 3; ++c)
          res.rgb.at(x, y, c) = req.mask.at(x, y) ? pattern.at(x, y, c)
                                                  : (req.image.channels == 3
                                                         ? req.image.at(x, y, c)
                                                         : req.image.at(x, y));
    }
  return res;
}

class MockTexturingClient final : public TexturingClient {
 public:
  // record_requests keeps full request copies for tests that inspect masks
  // and crops; long pipeline runs disable it to bound memory.
  explicit MockTexturingClient(bool record_requests = true)
      : record_requests_(record_requests) {}

  const std::vector<TexturingRequest>& requests() const { return requests_; }

  // Simulated transient failures: the next `n` submissions throw BackendError.
  void fail_next(int n) { fail_next_ = n; }

 protected:
  TexturingResult do_submit(const TexturingRequest& req) override {
    if (record_requests_) requests_.push_back(req);
    if (fail_next_ > 0) {
      --fail_next_;
      fail(Errc::backend_error, "injected mock failure");
    }
    return mock_generate(req);
  }

 private:
  bool record_requests_;
  std::vector<TexturingRequest> requests_;
  int fail_next_ = 0;
};

// --- JSON encoding shared by the HTTP client and the mock server ---

inline nlohmann::json request_to_json(const TexturingRequest& req) {
  nlohmann::json j{{"prompt", req.prompt},
                   {"conditioning_scale", req.params.conditioning_scale},
                   {"steps", req.params.steps},
                   {"guidance", req.params.guidance},
                   {"seed", req.params.seed}};
  if (req.mode == TexturingRequest::Mode::depth_texture) {
    j["control"] = image_to_base64_png(req.control);
  } else {
    j["image"] = image_to_base64_png(req.image);
    j["mask"] = image_to_base64_png(req.mask);
  }
  return j;
}

inline TexturingRequest request_from_json(const nlohmann::json& j, TexturingRequest::Mode mode) {
  TexturingRequest req;
  req.mode = mode;
  req.prompt = j.at("prompt").get<std::string>();
  req.params.conditioning_scale = j.at("conditioning_scale").get<double>();
  req.params.steps = j.at("steps").get<int>();
  req.params.guidance = j.at("guidance").get<double>();
  req.params.seed = j.at("seed").get<uint64_t>();
  if (mode == TexturingRequest::Mode::depth_texture) {
    req.control = base64_png_to_image(j.at("control").get<std::string>());
  } else {
    req.image = base64_png_to_image(j.at("image").get<std::string>());
    req.mask = base64_png_to_image(j.at("mask").get<std::string>());
  }
  return req;
}

// --- staged texturing pipelines ---

struct StageOptions {
  int pad = 16;       // bbox padding, pixels
  int dilation = 8;   // inpainting-mask buffer, pixels
  int size_multiple = 8;  // backend-required crop size multiple
};

namespace detail {

// Pads the box, then grows it to the backend's size multiple (clamped to the
// frame; shrinks only when a grown side would exceed the frame).
inline PixelBox expand_box(PixelBox box, int pad, int multiple, int width, int height) {
  box.x0 = std::max(0, box.x0 - pad);
  box.y0 = std::max(0, box.y0 - pad);
  box.x1 = std::min(width - 1, box.x1 + pad);
  box.y1 = std::min(height - 1, box.y1 + pad);
  auto grow = [multiple](int& lo, int& hi, int limit) {
    int size = hi - lo + 1;
    int target = std::min(limit, (size + multiple - 1) / multiple * multiple);
    target = target / multiple * multiple;
    if (target < multiple) target = std::min(multiple, limit);
    int extra = target - size;
    if (extra > 0) {
      lo = std::max(0, lo - extra / 2);
      hi = lo + target - 1;
      if (hi >= limit) {
        hi = limit - 1;
        lo = hi - target + 1;
      }
    } else if (extra < 0) {
      hi = lo + target - 1;
    }
  };
  grow(box.x0, box.x1, width);
  grow(box.y0, box.y1, height);
  return box;
}

// depth_texture on a crop: resize the crop to the backend's square working
// resolution, then resize the result back and composite it into a canvas.
inline ImageU8 textured_crop_canvas(const ImageU8& control_full, const PixelBox& box,
                                    const std::string& prompt, DiffusionParams params,
                                    TexturingClient& client) {
  ImageU8 control_crop = crop(control_full, box.x0, box.y0, box.width(), box.height());
  ImageU8 control_resized = resize_bilinear(control_crop, params.resolution, params.resolution);

  TexturingRequest req;
  req.mode = TexturingRequest::Mode::depth_texture;
  req.prompt = prompt;
  req.control = control_resized;
  req.params = params;
  TexturingResult res = client.submit(req);
  if (res.rgb.width != params.resolution || res.rgb.height != params.resolution)
    fail(Errc::backend_error, "backend returned a wrong resolution");

  ImageU8 back = resize_bilinear(res.rgb, box.width(), box.height());
  ImageU8 canvas(control_full.width, control_full.height, 3);
  blit(canvas, back, box.x0, box.y0);
  return canvas;
}

inline void overlay_masked(ImageU8& dst, const ImageU8& src, const ImageU8& mask) {
  for (int y = 0; y < dst.height; ++y)
    for (int x = 0; x < dst.width; ++x)
      if (mask.at(x, y))
        for (int c = 0; c < 3; ++c) dst.at(x, y, c) = src.at(x, y, c);
}

inline DiffusionParams stage_params(const DiffusionParams& base, int stage) {
  DiffusionParams p = base;
  p.seed = stage == 0 ? base.seed : mix_u64(base.seed, static_cast<uint64_t>(stage));
  return p;
}

}  // namespace detail

// One-stage: a single depth-conditioned request over the full frame.
inline ImageU8 texture_one_stage(const Framebuffer& fb, const PromptSpec& prompt,
                                 const DiffusionParams& params, TexturingClient& client) {
  params.validate();
  TexturingRequest req;
  req.mode = TexturingRequest::Mode::depth_texture;
  req.prompt = prompt.combined;
  req.control = depth_to_control_image(fb).image;
  req.params = params;
  TexturingResult res = client.submit(req);
  if (res.rgb.width != fb.width || res.rgb.height != fb.height)
    fail(Errc::backend_error, "backend returned a wrong resolution");
  return res.rgb;
}

// Two-stage: depth-texture the object-bbox crop, then inpaint the complement
// of the dilated object mask with the background prompt. Object pixels in the
// final image come only from stage 1.
inline ImageU8 texture_two_stage(const Framebuffer& fb, const PromptSpec& prompts,
                                 const DiffusionParams& params, TexturingClient& client,
                                 const StageOptions& opt = {}) {
  params.validate();
  ImageU8 obj_mask = instance_mask(fb, kObjectId);
  PixelBox bbox = mask_bbox(obj_mask);
  if (bbox.empty()) fail(Errc::object_not_visible, "two-stage: object mask is empty");

  ImageU8 control = depth_to_control_image(fb).image;
  PixelBox box = detail::expand_box(bbox, opt.pad, opt.size_multiple, fb.width, fb.height);
  ImageU8 canvas = detail::textured_crop_canvas(control, box, prompts.object_text,
                                                detail::stage_params(params, 0), client);

  ImageU8 keep = dilate_mask(obj_mask, opt.dilation);
  TexturingRequest inpaint;
  inpaint.mode = TexturingRequest::Mode::inpaint;
  inpaint.prompt = prompts.background_text;
  inpaint.image = canvas;
  inpaint.mask = mask_complement(keep);
  inpaint.params = detail::stage_params(params, 1);
  TexturingResult res = client.submit(inpaint);
  if (res.rgb.width != fb.width || res.rgb.height != fb.height)
    fail(Errc::backend_error, "backend returned a wrong resolution");

  ImageU8 final_image = res.rgb;
  detail::overlay_masked(final_image, canvas, obj_mask);
  return final_image;
}

// Three-stage: two-stage texturing of the empty-table render (cropped on the
// table), a depth-textured object crop, and a mask overlay. Exactly three
// backend requests.
inline ImageU8 texture_three_stage(const Framebuffer& fb_full, const Framebuffer& fb_empty,
                                   const PromptSpec& prompts, const DiffusionParams& params,
                                   TexturingClient& client, const StageOptions& opt = {}) {
  params.validate();
  if (fb_full.width != fb_empty.width || fb_full.height != fb_empty.height)
    fail(Errc::shape_mismatch, "full/empty render size mismatch");
  ImageU8 obj_mask = instance_mask(fb_full, kObjectId);
  if (mask_bbox(obj_mask).empty()) fail(Errc::object_not_visible, "three-stage: object mask empty");

  // Stage A: empty table, crop on the table.
  ImageU8 table_mask = instance_mask(fb_empty, kTableId);
  PixelBox table_box = mask_bbox(table_mask);
  if (table_box.empty()) fail(Errc::object_not_visible, "three-stage: table not visible");
  ImageU8 control_empty = depth_to_control_image(fb_empty).image;
  PixelBox boxA =
      detail::expand_box(table_box, opt.pad, opt.size_multiple, fb_empty.width, fb_empty.height);
  ImageU8 canvasA = detail::textured_crop_canvas(control_empty, boxA, prompts.background_text,
                                                 detail::stage_params(params, 0), client);

  ImageU8 keepA = dilate_mask(table_mask, opt.dilation);
  TexturingRequest inpaintA;
  inpaintA.mode = TexturingRequest::Mode::inpaint;
  inpaintA.prompt = prompts.background_text;
  inpaintA.image = canvasA;
  inpaintA.mask = mask_complement(keepA);
  inpaintA.params = detail::stage_params(params, 1);
  ImageU8 stageA = client.submit(inpaintA).rgb;
  if (stageA.width != fb_full.width || stageA.height != fb_full.height)
    fail(Errc::backend_error, "backend returned a wrong resolution");

  // Stage B: object crop from the full render.
  ImageU8 control_full = depth_to_control_image(fb_full).image;
  PixelBox boxB = detail::expand_box(mask_bbox(obj_mask), opt.pad, opt.size_multiple,
                                     fb_full.width, fb_full.height);
  ImageU8 canvasB = detail::textured_crop_canvas(control_full, boxB, prompts.object_text,
                                                 detail::stage_params(params, 2), client);

  // Stage C: overlay the object pixels onto the textured empty table.
  ImageU8 final_image = stageA;
  detail::overlay_masked(final_image, canvasB, obj_mask);
  return final_image;
}

// Scene-level convenience wrapper that renders both framebuffers first.
inline ImageU8 texture_three_stage(const SceneSpec& scene, const PinholeCamera& cam,
                                   const MeshCatalog& meshes, const PromptSpec& prompts,
                                   const DiffusionParams& params, TexturingClient& client,
                                   const StageOptions& opt = {}) {
  Framebuffer fb_full = rasterize(scene, cam, meshes, false);
  Framebuffer fb_empty = render_depth_without_object(scene, cam, meshes);
  return texture_three_stage(fb_full, fb_empty, prompts, params, client, opt);
}

// Inpainting baseline (no depth conditioning): sequentially regenerate the
// object region and then the background region, starting from a black canvas.
inline ImageU8 texture_inpainting_baseline(const Framebuffer& fb, const PromptSpec& prompts,
                                           const DiffusionParams& params,
                                           TexturingClient& client) {
  params.validate();
  ImageU8 obj_mask = instance_mask(fb, kObjectId);
  if (mask_bbox(obj_mask).empty()) fail(Errc::object_not_visible, "baseline: object mask empty");

  TexturingRequest first;
  first.mode = TexturingRequest::Mode::inpaint;
  first.prompt = prompts.object_text;
  first.image = ImageU8(fb.width, fb.height, 3);
  first.mask = obj_mask;
  first.params = detail::stage_params(params, 0);
  ImageU8 with_object = client.submit(first).rgb;

  TexturingRequest second;
  second.mode = TexturingRequest::Mode::inpaint;
  second.prompt = prompts.background_text;
  second.image = with_object;
  second.mask = mask_complement(obj_mask);
  second.params = detail::stage_params(params, 1);
  return client.submit(second).rgb;
}

}  // namespace dsg
