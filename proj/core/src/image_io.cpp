#include "artbrain/image_io.hpp"

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
    auto *err = reinterpret_cast<JpegErrorManager *>(info->err);
    (*info->err->format_message)(info, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

RgbImage decode_png(std::span<const std::byte> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw FormatError(std::string("corrupt PNG: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    RgbImage out(image.width, image.height);
    if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("corrupt PNG: " + msg);
    }
    return out;
}

// Kept free of non-trivial locals so the longjmp path cannot skip destructors.
bool decode_jpeg_into(std::span<const std::byte> bytes, RgbImage &out, char *message) {
    jpeg_decompress_struct info;
    JpegErrorManager err;
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silence;
    if (setjmp(err.jump) != 0) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&info);
        return false;
    }
    jpeg_create_decompress(&info);
    jpeg_mem_src(&info, reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&info, TRUE);
    info.out_color_space = JCS_RGB;
    jpeg_start_decompress(&info);
    out.width = info.output_width;
    out.height = info.output_height;
    out.channels = 3;
    out.pixels.resize(out.width * out.height * 3);
    while (info.output_scanline < info.output_height) {
        JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(info.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&info, &row, 1);
    }
    jpeg_finish_decompress(&info);
    jpeg_destroy_decompress(&info);
    return true;
}

bool encode_jpeg_into(const RgbImage &image, int quality, unsigned char **buffer, unsigned long *size,
                      char *message) {
    jpeg_compress_struct info;
    JpegErrorManager err;
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silence;
    if (setjmp(err.jump) != 0) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_compress(&info);
        return false;
    }
    jpeg_create_compress(&info);
    jpeg_mem_dest(&info, buffer, size);
    info.image_width = static_cast<JDIMENSION>(image.width);
    info.image_height = static_cast<JDIMENSION>(image.height);
    info.input_components = 3;
    info.in_color_space = JCS_RGB;
    jpeg_set_defaults(&info);
    jpeg_set_quality(&info, quality, TRUE);
    for (int c = 0; c < info.num_components; ++c) {
        info.comp_info[c].h_samp_factor = 1;
        info.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&info, TRUE);
    while (info.next_scanline < info.image_height) {
        auto *row = const_cast<JSAMPROW>(image.pixels.data() + static_cast<std::size_t>(info.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&info, &row, 1);
    }
    jpeg_finish_compress(&info);
    jpeg_destroy_compress(&info);
    return true;
}

void require_rgb(const RgbImage &image) {
    if (image.channels != 3 || image.width == 0 || image.height == 0 ||
        image.pixels.size() != image.width * image.height * 3) {
        throw FormatError("expected a non-empty 3-channel raster");
    }
}

}  // namespace

ImageFormat sniff_format(std::span<const std::byte> bytes) noexcept {
    static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return ImageFormat::png;
    if (bytes.size() >= 3 && bytes[0] == std::byte{0xff} && bytes[1] == std::byte{0xd8} &&
        bytes[2] == std::byte{0xff}) {
        return ImageFormat::jpeg;
    }
    return ImageFormat::unknown;
}

RgbImage decode_image(std::span<const std::byte> bytes) {
    switch (sniff_format(bytes)) {
    case ImageFormat::png:
        return decode_png(bytes);
    case ImageFormat::jpeg: {
        RgbImage out;
        char message[JMSG_LENGTH_MAX] = {};
        if (!decode_jpeg_into(bytes, out, message)) throw FormatError(std::string("corrupt JPEG: ") + message);
        if (out.width == 0 || out.height == 0) throw FormatError("JPEG has no pixels");
        return out;
    }
    case ImageFormat::unknown:
        break;
    }
    throw FormatError("not a PNG or JPEG image");
}

RgbImage read_image(const std::filesystem::path &path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::byte> encode_png(const RgbImage &image) {
    require_rgb(image);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr) == 0) {
        throw FormatError(std::string("PNG encode failed: ") + png.message);
    }
    std::vector<std::byte> out(size);
    if (png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr) == 0) {
        throw FormatError(std::string("PNG encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

std::vector<std::byte> encode_jpeg(const RgbImage &image, int quality) {
    require_rgb(image);
    if (quality < 1 || quality > 100) throw ArgumentError("JPEG quality must lie in [1, 100]");
    unsigned char *buffer = nullptr;
    unsigned long size = 0;
    char message[JMSG_LENGTH_MAX] = {};
    const bool ok = encode_jpeg_into(image, quality, &buffer, &size, message);
    std::vector<std::byte> out;
    if (ok) {
        out.resize(size);
        std::memcpy(out.data(), buffer, size);
    }
    std::free(buffer);
    if (!ok) throw FormatError(std::string("JPEG encode failed: ") + message);
    return out;
}

void write_image(const std::filesystem::path &path, const RgbImage &image, int jpeg_quality) {
    auto ext = path.extension().string();
    for (auto &ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".png") {
        write_file(path, encode_png(image));
    } else if (ext == ".jpg" || ext == ".jpeg") {
        write_file(path, encode_jpeg(image, jpeg_quality));
    } else {
        throw ArgumentError("unsupported image extension: " + ext);
    }
}

std::vector<std::byte> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> out(size);
    if (size > 0 && !in.read(reinterpret_cast<char *>(out.data()), static_cast<std::streamsize>(size))) {
        throw IoError("cannot read " + path.string());
    }
    return out;
}

void write_file(const std::filesystem::path &path, std::span<const std::byte> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace artbrain
