#include "dcedseg/png_io.hpp"

#include <png.h>

#include <cstring>

#include "dcedseg/error.hpp"

namespace dcedseg {

Image8 read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;

    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw IoError(std::string("failed to open PNG (") + image.message + ")", path.string());

    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    Image8 out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.channels = color ? 3 : 1;
    out.data.resize(PNG_IMAGE_SIZE(image));

    if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(std::string("failed to decode PNG (") + image.message + ")", path.string());
    }
    return out;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    Image8 raw = read_png(path);
    if (raw.channels == 3) return to_rgb(raw);
    RgbImage out{raw.width, raw.height, {}};
    out.rgb.resize(raw.pixel_count() * 3);
    for (std::size_t i = 0; i < raw.pixel_count(); ++i)
        out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = raw.data[i];
    return out;
}

static void write_png_impl(const std::filesystem::path& path, const std::uint8_t* data,
                           int width, int height, png_uint_32 format) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;

    if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr))
        throw IoError(std::string("failed to write PNG (") + image.message + ")", path.string());
}

void write_png_gray(const std::filesystem::path& path, const std::uint8_t* data, int width, int height) {
    write_png_impl(path, data, width, height, PNG_FORMAT_GRAY);
}

void write_png_rgb(const std::filesystem::path& path, const std::uint8_t* rgb, int width, int height) {
    write_png_impl(path, rgb, width, height, PNG_FORMAT_RGB);
}

}  // namespace dcedseg
