// gridward_server: session service for the operator console.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "gridward/bridge_server.hpp"

int main(int argc, char** argv)
{
   using namespace gridward;
   CLI::App app{"gridward_server: HTTP+WebSocket session service"};
   std::string address = "127.0.0.1";
   unsigned short port = 8642;
   std::string data_dir = GRIDWARD_DATA_DIR;
   std::string log_dir, pricing_file;
   std::size_t capacity = 16;
   int idle_minutes = 30;
   app.add_option("--address", address, "Listen address")->envname("GRIDWARD_ADDRESS");
   app.add_option("--port", port, "Listen port")->envname("GRIDWARD_PORT");
   app.add_option("--data", data_dir, "Directory holding cases/ and scenarios/")
      ->envname("GRIDWARD_DATA");
   app.add_option("--logs", log_dir, "Directory for finished session logs")->envname("GRIDWARD_LOGS");
   app.add_option("--pricing", pricing_file, "Pricing JSON")->envname("GRIDWARD_PRICING");
   app.add_option("--capacity", capacity, "Maximum concurrent sessions")->envname("GRIDWARD_CAPACITY");
   app.add_option("--idle-minutes", idle_minutes, "Idle session expiry")->envname("GRIDWARD_IDLE_MINUTES");
   CLI11_PARSE(app, argc, argv);

   try {
      bridge::ManagerOptions opt;
      opt.data_dir = data_dir;
      opt.capacity = capacity;
      opt.idle_timeout = std::chrono::minutes(idle_minutes);
      if(!log_dir.empty())
         opt.log_dir = log_dir;
      if(!pricing_file.empty())
         opt.pricing = load_pricing(pricing_file);
      bridge::SessionManager manager(opt);
      bridge::Server server(manager, address, port);
      std::cout << "listening on " << address << ":" << server.port() << std::endl;
      server.run();
   } catch(const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
   }
   return 0;
}
