static void goodG2B_popen()
{
   char * data;
   char dataBuffer[100] = "ls ";
   data = dataBuffer;
   /* FIX: Append a fixed string to data (not user / external input) */
   strcat(data, "-la");
   popen(data, "r");
}
